"""Answer-time evidence gathering over a graph store snapshot.

Query keywords are split into low-level (specific entities) and high-level
(broad themes); both are embedded and cosine-matched against the key-value
index, matched entities are expanded one hop, chunks are scored against the
query, and everything is admitted greedily by score under fixed word-token
budgets. Retrieval is read-only and deterministic for a fixed store, query
and provider seed; ties break lexicographically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import EngineError
from .kgindex import Entity, GraphStore, Relation
from .providers import GenerationRequest, Provider
from .utils import token_count


class EmptyQuery(EngineError):
    code = "EMPTY_QUERY"


@dataclass(frozen=True)
class QueryKeywords:
    low_level: tuple[str, ...]
    high_level: tuple[str, ...]

    def is_empty(self) -> bool:
        return not (self.low_level or self.high_level)

    @property
    def bag(self) -> str:
        return " ".join(self.low_level + self.high_level)


@dataclass
class RetrievalConfig:
    top_k: int = 50
    chunk_top_k: int = 20
    max_total_tokens: int = 15000
    entity_token_budget: int = 3000
    relation_token_budget: int = 5000
    rerank_enabled: bool = True
    # Minimum cosine scores below which a match is noise, not evidence.
    kv_min_score: float = 0.30
    chunk_min_score: float = 0.15

    def __post_init__(self):
        for name in ("top_k", "chunk_top_k", "max_total_tokens", "entity_token_budget", "relation_token_budget"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.entity_token_budget + self.relation_token_budget > self.max_total_tokens:
            raise ValueError("entity and relation budgets exceed the total budget")


@dataclass(frozen=True)
class ChunkHit:
    chunk_id: str
    doc_key: str
    text: str
    score: float


@dataclass(frozen=True)
class TokenUsage:
    entity_tokens: int = 0
    relation_tokens: int = 0
    total_tokens: int = 0


@dataclass
class RetrievalBundle:
    """The evidence package every answer must be built from."""

    matched_entities: list[tuple[Entity, float]] = field(default_factory=list)
    matched_relations: list[tuple[Relation, float]] = field(default_factory=list)
    neighbor_entities: list[Entity] = field(default_factory=list)
    chunks: list[ChunkHit] = field(default_factory=list)
    provenance_keys: set[str] = field(default_factory=set)
    token_usage: TokenUsage = field(default_factory=TokenUsage)

    def is_empty(self) -> bool:
        return not self.provenance_keys

    def all_entities(self) -> list[Entity]:
        return [e for e, _ in self.matched_entities] + list(self.neighbor_entities)

    def to_audit_lines(self) -> str:
        """One element per line with score and provenance, for audit logs."""
        lines = []
        for entity, score in self.matched_entities:
            lines.append(
                f"ENTITY|{entity.canonical_name}|{score:.6f}|{','.join(sorted(entity.source_keys))}"
            )
        for entity in self.neighbor_entities:
            lines.append(
                f"NEIGHBOR|{entity.canonical_name}|-|{','.join(sorted(entity.source_keys))}"
            )
        for rel, score in self.matched_relations:
            lines.append(f"RELATION|{rel.identifier}|{score:.6f}|{','.join(sorted(rel.source_keys))}")
        for hit in self.chunks:
            lines.append(f"CHUNK|{hit.chunk_id}|{hit.score:.6f}|{hit.doc_key}")
        lines.append(
            "USAGE|entity={0}|relation={1}|total={2}".format(
                self.token_usage.entity_tokens,
                self.token_usage.relation_tokens,
                self.token_usage.total_tokens,
            )
        )
        return "\n".join(lines)

    def contains_label(self, label: str) -> bool:
        """True when ``label`` appears in an entity, relation or chunk of the bundle."""
        needle = " ".join(label.lower().split())
        for entity in self.all_entities():
            if needle == entity.canonical_name or needle in entity.description:
                return True
        for rel, _ in self.matched_relations:
            if needle in (rel.source, rel.target) or needle in rel.description:
                return True
        return any(needle in hit.text.lower() for hit in self.chunks)


def entity_text(entity: Entity) -> str:
    return f"{entity.canonical_name} ({entity.entity_type}): {entity.description}"


def relation_text(rel: Relation) -> str:
    return f"{rel.source} -[{rel.relation_kind}]-> {rel.target}: {rel.description}"


def extract_keywords(store: GraphStore, query: str, provider: Provider) -> QueryKeywords:
    """Split a query into low/high-level keyword lists via the provider.

    The provider sees the store's entity names so low-level keywords can be
    anchored to known entities; both lists come back lowercased and
    deduplicated.
    """
    if not query.strip():
        raise EmptyQuery("query must be non-empty")
    response = provider.generate(
        GenerationRequest(
            "extract_keywords",
            {"query": query, "entity_names": "\n".join(sorted(store.entities))},
        )
    )
    low: list[str] = []
    high: list[str] = []
    for line in response.text.split("\n"):
        if line.startswith("LOW:"):
            low = [w.strip().lower() for w in line[4:].split(",") if w.strip()]
        elif line.startswith("HIGH:"):
            high = [w.strip().lower() for w in line[5:].split(",") if w.strip()]
    return QueryKeywords(
        low_level=tuple(sorted(set(low))), high_level=tuple(sorted(set(high)))
    )


def _admit(candidates, text_of, budget_left, total_left, admitted, spent):
    """Greedy whole-element admission in the candidates' given order."""
    for item in candidates:
        tokens = token_count(text_of(item))
        if tokens <= budget_left and tokens <= total_left:
            admitted.append(item)
            budget_left -= tokens
            total_left -= tokens
            spent += tokens
    return budget_left, total_left, spent


def retrieve(
    store: GraphStore,
    kw: QueryKeywords,
    cfg: RetrievalConfig,
    provider: Provider,
) -> RetrievalBundle:
    """Assemble a token-budgeted, reranked evidence bundle.

    Steps: (1) cosine-match keywords against KV keys and keep the ``top_k``
    distinct hits, low-level keywords scoring entity entries and high-level
    keywords scoring relation-keyword entries; (2) add one-hop graph
    neighbors of every matched entity; (3) score chunks against the keyword
    bag and keep ``chunk_top_k``; (4) optionally rerank chunks through the
    provider hook; (5) admit elements greedily by score under the entity,
    relation and total budgets. An empty bundle is a valid result.
    """
    bundle = RetrievalBundle()
    if store.is_empty() or kw.is_empty():
        return bundle

    low_vecs = [provider.embed(k) for k in kw.low_level]
    high_vecs = [provider.embed(k) for k in kw.high_level]

    rel_by_id = store.relation_by_id()
    scored_entries: list[tuple[float, str]] = []
    for key in sorted(store.kv_index):
        entry = store.kv_index[key]
        is_entity_entry = key in store.entities
        vecs = low_vecs if is_entity_entry else high_vecs
        if not vecs:
            continue
        key_vec = provider.embed(key)
        score = max(v.cosine(key_vec) for v in vecs)
        if score >= cfg.kv_min_score:
            scored_entries.append((score, key))
    scored_entries.sort(key=lambda pair: (-pair[0], pair[1]))
    scored_entries = scored_entries[: cfg.top_k]

    entity_hits: list[tuple[Entity, float]] = []
    relation_scores: dict[str, float] = {}
    for score, key in scored_entries:
        if key in store.entities:
            entity_hits.append((store.entities[key], score))
        for ref in store.kv_index[key].referents:
            if ref in rel_by_id:
                relation_scores[ref] = max(relation_scores.get(ref, 0.0), score)
    relation_hits = sorted(
        ((rel_by_id[rid], s) for rid, s in relation_scores.items()),
        key=lambda pair: (-pair[1], pair[0].identifier),
    )

    matched_names = {e.canonical_name for e, _ in entity_hits}
    neighbor_names: set[str] = set()
    for entity, _ in entity_hits:
        neighbor_names |= store.neighbors_of(entity.canonical_name)
    neighbor_names -= matched_names
    neighbors = [store.entities[n] for n in sorted(neighbor_names) if n in store.entities]

    query_bag = kw.bag
    chunk_hits: list[ChunkHit] = []
    if query_bag.strip():
        query_vec = provider.embed(query_bag)
        for chunk_id in sorted(store.chunks):
            chunk = store.chunks[chunk_id]
            score = query_vec.cosine(provider.embed(chunk.text))
            if score >= cfg.chunk_min_score:
                chunk_hits.append(
                    ChunkHit(chunk.chunk_id, chunk.doc_key, chunk.text, score)
                )
        chunk_hits.sort(key=lambda h: (-h.score, h.chunk_id))
        if cfg.rerank_enabled and chunk_hits:
            order = provider.rerank(query_bag, [(h.text, h.score) for h in chunk_hits])
            rank = {text: i for i, (text, _) in enumerate(order)}
            chunk_hits.sort(key=lambda h: (rank.get(h.text, len(rank)), h.chunk_id))
        chunk_hits = chunk_hits[: cfg.chunk_top_k]

    # Budgeted admission: matched entities by score, then neighbors by name,
    # then relations by score, then chunks; whole elements only.
    entity_left = cfg.entity_token_budget
    relation_left = cfg.relation_token_budget
    total_left = cfg.max_total_tokens
    entity_spent = relation_spent = 0

    admitted_entities: list[tuple[Entity, float]] = []
    entity_left, total_left, entity_spent = _admit(
        entity_hits, lambda pair: entity_text(pair[0]), entity_left, total_left, admitted_entities, entity_spent
    )
    admitted_neighbors: list[Entity] = []
    entity_left, total_left, entity_spent = _admit(
        neighbors, entity_text, entity_left, total_left, admitted_neighbors, entity_spent
    )
    admitted_relations: list[tuple[Relation, float]] = []
    relation_left, total_left, relation_spent = _admit(
        relation_hits, lambda pair: relation_text(pair[0]), relation_left, total_left, admitted_relations, relation_spent
    )
    admitted_chunks: list[ChunkHit] = []
    chunk_spent = 0
    _, total_left, chunk_spent = _admit(
        chunk_hits, lambda h: h.text, total_left, total_left, admitted_chunks, chunk_spent
    )

    bundle.matched_entities = admitted_entities
    bundle.neighbor_entities = admitted_neighbors
    bundle.matched_relations = admitted_relations
    bundle.chunks = admitted_chunks

    provenance: set[str] = set()
    for entity, _ in admitted_entities:
        provenance |= entity.source_keys
    for entity in admitted_neighbors:
        provenance |= entity.source_keys
    for rel, _ in admitted_relations:
        provenance |= rel.source_keys
    for hit in admitted_chunks:
        provenance.add(hit.doc_key)
    bundle.provenance_keys = provenance

    entity_tokens = entity_spent
    relation_tokens = relation_spent
    bundle.token_usage = TokenUsage(
        entity_tokens=entity_tokens,
        relation_tokens=relation_tokens,
        total_tokens=entity_tokens + relation_tokens + chunk_spent,
    )
    return bundle
