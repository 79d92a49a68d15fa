"""Dual-level knowledge-graph index: extraction, dedup, updates, persistence.

The :class:`GraphStore` holds entities, relations, a key-value index (entity
names and relation keywords mapping to summarized paragraphs) and per-document
text chunks. Entity identity is case-insensitive, whitespace-normalized exact
name match; anything subtler (aliases, fuzzy matching) is out of scope.

Updates are incremental by construction: ingesting documents in any batching
or order yields the same entity-name and relation-triple sets, because merges
are set-based and description summaries are canonicalized by the provider's
summarize hook.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import DocumentRecord
from .errors import EngineError
from .providers import GenerationRequest, Provider

logger = logging.getLogger(__name__)

ENTITY_TYPES = frozenset(
    {
        "population",
        "intervention",
        "outcome",
        "mechanism",
        "study_design",
        "instrument",
        "moderator",
        "confounder",
        "other",
    }
)

RELATION_KINDS = frozenset(
    {"causal", "correlational", "moderates", "confounds", "measures", "methodological"}
)

STORE_FORMAT = "evigraph-store/1"

DEFAULT_CHUNK_WORDS = 300
DEFAULT_CHUNK_OVERLAP = 30


class ExtractionParseError(EngineError):
    """Provider returned an undecodable extraction structure."""

    code = "EXTRACTION_PARSE_ERROR"


class DuplicateDocument(EngineError):
    code = "DUPLICATE_DOCUMENT"
    http_status = 409


class CorruptStore(EngineError):
    """Persisted store failed schema or checksum validation."""

    code = "CORRUPT_STORE"

    def __init__(self, message: str, section: str):
        super().__init__(f"{section}: {message}")
        self.section = section


def normalize_name(name: str) -> str:
    return " ".join(name.lower().split())


@dataclass
class Entity:
    canonical_name: str
    entity_type: str
    description: str
    source_keys: set[str]

    def __post_init__(self):
        if not self.canonical_name:
            raise ValueError("entity name must be non-empty")
        if self.entity_type not in ENTITY_TYPES:
            raise ValueError(f"unknown entity type: {self.entity_type}")
        if not self.source_keys:
            raise ValueError("entity must carry at least one source key")


@dataclass
class Relation:
    source: str
    target: str
    relation_kind: str
    keywords: list[str]
    description: str
    source_keys: set[str]

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError("relation endpoints must differ")
        if self.relation_kind not in RELATION_KINDS:
            raise ValueError(f"unknown relation kind: {self.relation_kind}")
        if not self.source_keys:
            raise ValueError("relation must carry at least one source key")

    @property
    def identifier(self) -> str:
        return f"{self.source}->{self.target}#{self.relation_kind}"


@dataclass
class KVEntry:
    key: str
    value: str
    referents: set[str]


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_key: str
    text: str


@dataclass
class GraphStore:
    """Mutable store; one writer at a time, snapshot readers."""

    entities: dict[str, Entity] = field(default_factory=dict)
    relations: list[Relation] = field(default_factory=list)
    kv_index: dict[str, KVEntry] = field(default_factory=dict)
    chunks: dict[str, Chunk] = field(default_factory=dict)
    ingested_keys: set[str] = field(default_factory=set)
    version: int = 0

    def relation_by_id(self) -> dict[str, Relation]:
        return {rel.identifier: rel for rel in self.relations}

    def entity_names(self) -> set[str]:
        return set(self.entities)

    def relation_triples(self) -> set[tuple[str, str, str]]:
        return {(r.source, r.target, r.relation_kind) for r in self.relations}

    def neighbors_of(self, name: str) -> set[str]:
        """Entity names sharing any relation with ``name`` (either direction)."""
        out = set()
        for rel in self.relations:
            if rel.source == name:
                out.add(rel.target)
            elif rel.target == name:
                out.add(rel.source)
        return out

    def is_empty(self) -> bool:
        return not (self.entities or self.relations or self.chunks)

    def integrity_issues(self) -> list[str]:
        """Referential-integrity violations; empty list means consistent."""
        issues = []
        rel_ids = {rel.identifier for rel in self.relations}
        for rel in self.relations:
            for endpoint in (rel.source, rel.target):
                if endpoint not in self.entities:
                    issues.append(f"relation {rel.identifier} endpoint missing: {endpoint}")
        for entry in self.kv_index.values():
            for ref in entry.referents:
                if ref not in self.entities and ref not in rel_ids:
                    issues.append(f"kv entry {entry.key!r} dangling referent: {ref}")
        for name in self.entities:
            if name not in self.kv_index:
                issues.append(f"entity without kv entry: {name}")
        for rel in self.relations:
            if not any(rel.identifier in e.referents for e in self.kv_index.values()):
                issues.append(f"relation without kv keyword entry: {rel.identifier}")
        return issues


def split_chunks(
    text: str,
    max_words: int = DEFAULT_CHUNK_WORDS,
    overlap: int = DEFAULT_CHUNK_OVERLAP,
) -> list[str]:
    """Split text into word windows of ``max_words`` with ``overlap`` carryover."""
    words = text.split()
    if len(words) <= max_words:
        return [" ".join(words)] if words else []
    stride = max_words - overlap
    pieces = []
    for start in range(0, len(words), stride):
        window = words[start : start + max_words]
        pieces.append(" ".join(window))
        if start + max_words >= len(words):
            break
    return pieces


def extract_graph_elements(
    doc: DocumentRecord, provider: Provider
) -> tuple[list[Entity], list[Relation]]:
    """Extract entities and relations for one document via the provider.

    The provider must answer in the line-structured element format (see the
    ``extract_elements`` template). Anything undecodable raises
    :class:`ExtractionParseError`; nothing is silently dropped.
    """
    response = provider.generate(
        GenerationRequest(
            "extract_elements", {"doc_key": doc.key, "text": doc.text}
        )
    )
    entities: dict[str, Entity] = {}
    relations: list[Relation] = []
    for lineno, line in enumerate(response.text.split("\n"), start=1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split("|")]
        if parts[0] == "ENTITY" and len(parts) == 4:
            name = normalize_name(parts[1])
            if parts[2] not in ENTITY_TYPES:
                raise ExtractionParseError(
                    f"line {lineno}: unknown entity type {parts[2]!r}"
                )
            if name and name not in entities:
                entities[name] = Entity(
                    canonical_name=name,
                    entity_type=parts[2],
                    description=parts[3],
                    source_keys={doc.key},
                )
        elif parts[0] == "RELATION" and len(parts) == 6:
            source, target = normalize_name(parts[1]), normalize_name(parts[2])
            if parts[3] not in RELATION_KINDS:
                raise ExtractionParseError(
                    f"line {lineno}: unknown relation kind {parts[3]!r}"
                )
            keywords = sorted({k.strip() for k in parts[4].split(",") if k.strip()})
            relations.append(
                Relation(
                    source=source,
                    target=target,
                    relation_kind=parts[3],
                    keywords=keywords or [parts[3]],
                    description=parts[5],
                    source_keys={doc.key},
                )
            )
        else:
            raise ExtractionParseError(f"line {lineno}: unrecognized element line")
    for rel in relations:
        for endpoint in (rel.source, rel.target):
            if endpoint not in entities:
                raise ExtractionParseError(
                    f"relation {rel.identifier} references unextracted entity {endpoint!r}"
                )
    return list(entities.values()), relations


def _merge_description(provider: Provider, *fragments: str) -> str:
    parts = [f for f in fragments if f]
    return provider.summarize(parts) if parts else ""


def _rebuild_kv_index(store: GraphStore, provider: Provider) -> None:
    kv: dict[str, KVEntry] = {}
    for name, entity in store.entities.items():
        kv[name] = KVEntry(key=name, value=entity.description, referents={name})
    by_keyword: dict[str, list[Relation]] = {}
    for rel in store.relations:
        for keyword in rel.keywords:
            by_keyword.setdefault(keyword, []).append(rel)
    for keyword, rels in by_keyword.items():
        value = _merge_description(provider, *(r.description for r in rels))
        referents = {r.identifier for r in rels}
        if keyword in kv:
            # Keyword collides with an entity name: keep both referent sets.
            kv[keyword].referents.update(referents)
            kv[keyword].value = _merge_description(provider, kv[keyword].value, value)
        else:
            kv[keyword] = KVEntry(key=keyword, value=value, referents=referents)
    store.kv_index = kv


def dedup_merge(
    store: GraphStore,
    new_entities: Sequence[Entity],
    new_relations: Sequence[Relation],
    provider: Provider,
) -> GraphStore:
    """Merge extracted elements into the store, deduplicating by identity.

    Entities equal under case-insensitive, whitespace-normalized name
    comparison merge (source keys unioned, descriptions re-summarized);
    relations merge on (source, target, kind). The KV index is rebuilt so
    every entity name and every relation keyword resolves. A call that
    changes nothing leaves the version untouched.
    """
    changed = False
    for incoming in new_entities:
        name = normalize_name(incoming.canonical_name)
        existing = store.entities.get(name)
        if existing is None:
            store.entities[name] = Entity(
                canonical_name=name,
                entity_type=incoming.entity_type,
                description=_merge_description(provider, incoming.description),
                source_keys=set(incoming.source_keys),
            )
            changed = True
        else:
            merged_desc = _merge_description(
                provider, existing.description, incoming.description
            )
            merged_keys = existing.source_keys | incoming.source_keys
            if merged_desc != existing.description or merged_keys != existing.source_keys:
                changed = True
            existing.description = merged_desc
            existing.source_keys = merged_keys

    by_triple = {(r.source, r.target, r.relation_kind): r for r in store.relations}
    for incoming in new_relations:
        triple = (
            normalize_name(incoming.source),
            normalize_name(incoming.target),
            incoming.relation_kind,
        )
        for endpoint in triple[:2]:
            if endpoint not in store.entities:
                raise ValueError(f"relation endpoint not in store: {endpoint!r}")
        existing = by_triple.get(triple)
        if existing is None:
            rel = Relation(
                source=triple[0],
                target=triple[1],
                relation_kind=triple[2],
                keywords=sorted(set(incoming.keywords)),
                description=_merge_description(provider, incoming.description),
                source_keys=set(incoming.source_keys),
            )
            store.relations.append(rel)
            by_triple[triple] = rel
            changed = True
        else:
            merged_desc = _merge_description(
                provider, existing.description, incoming.description
            )
            merged_keys = existing.source_keys | incoming.source_keys
            merged_kw = sorted(set(existing.keywords) | set(incoming.keywords))
            if (
                merged_desc != existing.description
                or merged_keys != existing.source_keys
                or merged_kw != existing.keywords
            ):
                changed = True
            existing.description = merged_desc
            existing.source_keys = merged_keys
            existing.keywords = merged_kw

    if changed:
        store.relations.sort(key=lambda r: (r.source, r.target, r.relation_kind))
        _rebuild_kv_index(store, provider)
        store.version += 1
    return store


def incremental_update(
    store: GraphStore, docs: Sequence[DocumentRecord], provider: Provider
) -> GraphStore:
    """Extract and merge each document in order; register its text chunks.

    Equivalent to a batch build over the same documents: with a deterministic
    provider, any partition of a corpus yields identical entity and relation
    sets. Re-submitting an ingested key raises :class:`DuplicateDocument`.
    """
    seen_now: set[str] = set()
    for doc in docs:
        if doc.key in store.ingested_keys or doc.key in seen_now:
            raise DuplicateDocument(f"document already ingested: {doc.key}")
        seen_now.add(doc.key)
    for doc in docs:
        entities, relations = extract_graph_elements(doc, provider)
        store.ingested_keys.add(doc.key)
        for i, piece in enumerate(split_chunks(doc.text)):
            chunk_id = f"{doc.key}:{i}"
            store.chunks[chunk_id] = Chunk(chunk_id=chunk_id, doc_key=doc.key, text=piece)
        store.version += 1
        dedup_merge(store, entities, relations, provider)
        logger.debug(
            "ingested %s: %d entities, %d relations", doc.key, len(entities), len(relations)
        )
    return store


def build_store(
    docs: Sequence[DocumentRecord], provider: Provider
) -> GraphStore:
    """Batch-build a fresh store from ``docs``."""
    return incremental_update(GraphStore(), docs, provider)


# -- persistence --------------------------------------------------------------


def _entity_to_json(e: Entity) -> dict:
    return {
        "name": e.canonical_name,
        "type": e.entity_type,
        "description": e.description,
        "source_keys": sorted(e.source_keys),
    }


def _relation_to_json(r: Relation) -> dict:
    return {
        "source": r.source,
        "target": r.target,
        "kind": r.relation_kind,
        "keywords": list(r.keywords),
        "description": r.description,
        "source_keys": sorted(r.source_keys),
    }


def persist(store: GraphStore, path: str | Path) -> None:
    """Write the store as a sectioned, checksummed text file."""
    lines = [STORE_FORMAT]
    lines.append("[meta]")
    lines.append(
        json.dumps(
            {"version": store.version, "ingested_keys": sorted(store.ingested_keys)}
        )
    )
    lines.append("[entities]")
    for name in sorted(store.entities):
        lines.append(json.dumps(_entity_to_json(store.entities[name])))
    lines.append("[relations]")
    for rel in sorted(store.relations, key=lambda r: r.identifier):
        lines.append(json.dumps(_relation_to_json(rel)))
    lines.append("[kv]")
    for key in sorted(store.kv_index):
        entry = store.kv_index[key]
        lines.append(
            json.dumps(
                {"key": entry.key, "value": entry.value, "referents": sorted(entry.referents)}
            )
        )
    lines.append("[chunks]")
    for chunk_id in sorted(store.chunks):
        chunk = store.chunks[chunk_id]
        lines.append(
            json.dumps(
                {"chunk_id": chunk.chunk_id, "doc_key": chunk.doc_key, "text": chunk.text}
            )
        )
    body = "\n".join(lines) + "\n"
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    Path(path).write_text(body + f"[checksum]\nsha256:{digest}\n", encoding="utf-8")


def load(path: str | Path) -> GraphStore:
    """Read a store written by :func:`persist`, verifying schema and checksum."""
    raw = Path(path).read_text(encoding="utf-8")
    marker = "[checksum]\n"
    idx = raw.rfind(marker)
    if idx < 0:
        raise CorruptStore("checksum section missing", section="checksum")
    body, tail = raw[:idx], raw[idx + len(marker) :]
    if not tail.startswith("sha256:"):
        raise CorruptStore("malformed checksum line", section="checksum")
    expected = tail[len("sha256:") :].strip()
    actual = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if actual != expected:
        raise CorruptStore("checksum mismatch", section="checksum")

    lines = body.split("\n")
    if not lines or lines[0] != STORE_FORMAT:
        raise CorruptStore(f"unsupported format header: {lines[0] if lines else ''!r}", section="header")

    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in lines[1:]:
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif line.strip():
            if current is None:
                raise CorruptStore("content before first section", section="header")
            sections[current].append(line)

    def parse_rows(section: str) -> list[dict]:
        rows = []
        for line in sections.get(section, []):
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError:
                raise CorruptStore("invalid row", section=section) from None
        return rows

    if "meta" not in sections or not sections["meta"]:
        raise CorruptStore("meta section missing", section="meta")
    meta = parse_rows("meta")[0]

    store = GraphStore(version=int(meta.get("version", 0)))
    store.ingested_keys = set(meta.get("ingested_keys", []))
    try:
        for row in parse_rows("entities"):
            store.entities[row["name"]] = Entity(
                canonical_name=row["name"],
                entity_type=row["type"],
                description=row["description"],
                source_keys=set(row["source_keys"]),
            )
        for row in parse_rows("relations"):
            store.relations.append(
                Relation(
                    source=row["source"],
                    target=row["target"],
                    relation_kind=row["kind"],
                    keywords=list(row["keywords"]),
                    description=row["description"],
                    source_keys=set(row["source_keys"]),
                )
            )
        for row in parse_rows("kv"):
            store.kv_index[row["key"]] = KVEntry(
                key=row["key"], value=row["value"], referents=set(row["referents"])
            )
        for row in parse_rows("chunks"):
            store.chunks[row["chunk_id"]] = Chunk(
                chunk_id=row["chunk_id"], doc_key=row["doc_key"], text=row["text"]
            )
    except (KeyError, ValueError) as exc:
        raise CorruptStore(f"schema mismatch: {exc}", section="rows") from None
    store.relations.sort(key=lambda r: (r.source, r.target, r.relation_kind))
    return store
