"""Deterministic rule-based provider for hermetic runs and tests.

Generation is a pure function of (template id, variables): extraction,
keywording, classification, analysis and composition are all driven by a
fixed marker lexicon and sentence patterns that the bundled synthetic corpus
is written against. Embeddings come from the seeded hashing scheme on the
base class, so retrieval scores are reproducible for a fixed seed.
"""

from __future__ import annotations

import re
from typing import Iterable

from .providers import (
    STOPWORDS,
    GenerationRequest,
    Provider,
)

# Marker lexicon: canonical entity name -> entity type. Extraction recognizes
# exactly these names, so fixture corpora control graph content precisely.
ENTITY_LEXICON: dict[str, str] = {
    # populations
    "dementia patients": "population",
    "alzheimer patients": "population",
    "older adults": "population",
    "mild cognitive impairment": "population",
    # interventions
    "aerobic exercise": "intervention",
    "resistance training": "intervention",
    "tai chi": "intervention",
    "dance therapy": "intervention",
    "balance training": "intervention",
    "multicomponent exercise": "intervention",
    "telerehabilitation": "intervention",
    "walking program": "intervention",
    "yoga": "intervention",
    # mechanisms
    "bdnf": "mechanism",
    "cardiovascular fitness": "mechanism",
    "cerebral blood flow": "mechanism",
    "neuroplasticity": "mechanism",
    "hippocampal volume": "mechanism",
    "neuroinflammation": "mechanism",
    # outcomes
    "memory": "outcome",
    "cognitive function": "outcome",
    "executive function": "outcome",
    "gait speed": "outcome",
    "quality of life": "outcome",
    "intrinsic capacity": "outcome",
    "mobility": "outcome",
    # instruments
    "mmse": "instrument",
    "moca": "instrument",
    "tug": "instrument",
    "gds": "instrument",
    "fim": "instrument",
    "adas-cog": "instrument",
    "sppb": "instrument",
    # study designs
    "randomized controlled trial": "study_design",
    "pilot study": "study_design",
    "cohort study": "study_design",
    # moderators / confounders
    "age": "moderator",
    "dementia severity": "moderator",
    "medication use": "confounder",
    "baseline fitness": "confounder",
}

CAUSAL_VERB_LEMMAS = {
    "increased": "increase",
    "improved": "improve",
    "enhanced": "enhance",
    "raised": "raise",
    "boosted": "boost",
    "elevated": "elevate",
    "reduced": "reduce",
    "slowed": "slow",
}

OBJECTIVE_INSTRUMENTS = ("mmse", "moca", "tug", "adas-cog", "sppb")
SUBJECTIVE_INSTRUMENTS = ("gds", "fim")

SCOPE_TERMS = ("dementia", "alzheimer", "cognitive impairment")

# Entity-type -> causal-graph role used when planning graphs.
TYPE_TO_ROLE = {
    "population": "population",
    "intervention": "intervention",
    "outcome": "outcome",
    "mechanism": "mediator",
    "moderator": "moderator",
    "confounder": "confounder",
    "instrument": "mechanism",
    "study_design": "mechanism",
    "other": "mediator",
}

_NAME_ALT = "|".join(
    re.escape(name) for name in sorted(ENTITY_LEXICON, key=len, reverse=True)
)
_VERB_ALT = "|".join(CAUSAL_VERB_LEMMAS)

_CAUSAL_RE = re.compile(rf"\b({_NAME_ALT}) ({_VERB_ALT}) ({_NAME_ALT})\b")
_CORREL_RE = re.compile(
    rf"\b({_NAME_ALT}) (?:was|were) (?:associated|correlated) with ({_NAME_ALT})\b"
)
_MODERATES_RE = re.compile(
    rf"\b({_NAME_ALT}) moderated the effect of ({_NAME_ALT}) on ({_NAME_ALT})\b"
)
_CONFOUNDS_RE = re.compile(
    rf"\b({_NAME_ALT}) confounded the association between ({_NAME_ALT}) and ({_NAME_ALT})\b"
)
_MEASURES_RE = re.compile(
    rf"\b({_NAME_ALT}) (?:was|were) (?:assessed|measured|evaluated) (?:using|with) ({_NAME_ALT})\b"
)
_METHOD_RE = re.compile(rf"\b({_NAME_ALT}) was evaluated in a ({_NAME_ALT})\b")


def _sentences(text: str) -> list[str]:
    return [s.strip() for s in text.split(".") if s.strip()]


def _sentence_containing(text: str, name: str) -> str:
    for sentence in _sentences(text):
        if re.search(rf"\b{re.escape(name)}\b", sentence):
            return sentence
    return name


def find_entities(text: str) -> dict[str, str]:
    """Lexicon entities present in ``text`` (word-boundary match), name -> type."""
    found = {}
    for name, etype in ENTITY_LEXICON.items():
        if re.search(rf"\b{re.escape(name)}\b", text):
            found[name] = etype
    return found


def find_relations(text: str) -> list[tuple[str, str, str, str, str]]:
    """Pattern-matched relations in ``text``.

    Returns (source, target, kind, keyword, evidence sentence) tuples; the
    evidence sentence is the matched sentence itself.
    """
    rels = []
    for sentence in _sentences(text):
        for m in _CAUSAL_RE.finditer(sentence):
            rels.append(
                (m.group(1), m.group(3), "causal", CAUSAL_VERB_LEMMAS[m.group(2)], sentence)
            )
        for m in _CORREL_RE.finditer(sentence):
            rels.append((m.group(1), m.group(2), "correlational", "associate", sentence))
        for m in _MODERATES_RE.finditer(sentence):
            rels.append((m.group(1), m.group(3), "moderates", "moderate", sentence))
        for m in _CONFOUNDS_RE.finditer(sentence):
            rels.append((m.group(1), m.group(3), "confounds", "confound", sentence))
        for m in _MEASURES_RE.finditer(sentence):
            rels.append((m.group(2), m.group(1), "measures", "measure", sentence))
        for m in _METHOD_RE.finditer(sentence):
            if ENTITY_LEXICON.get(m.group(2)) == "study_design":
                rels.append((m.group(1), m.group(2), "methodological", "design", sentence))
    return rels


class MockProvider(Provider):
    """Fully deterministic provider; see module docstring for the rule set."""

    def __init__(self, seed: int = 0, dimension: int = 4096):
        self.seed = seed
        self.dimension = dimension

    # -- generation dispatch -------------------------------------------------

    def _generate_text(self, req: GenerationRequest) -> str:
        handler = getattr(self, f"_rule_{req.template_id}", None)
        if handler is None:
            raise NotImplementedError(f"no mock rule for template {req.template_id}")
        return handler(dict(req.variables))

    def _rule_extract_elements(self, v: dict) -> str:
        text = v["text"].lower()
        entities = find_entities(text)
        relations = find_relations(text)
        lines = []
        for name in sorted(entities):
            lines.append(
                f"ENTITY|{name}|{entities[name]}|{_sentence_containing(text, name)}"
            )
        seen = set()
        for source, target, kind, keyword, sentence in sorted(relations):
            if (source, target, kind) in seen:
                continue
            seen.add((source, target, kind))
            lines.append(f"RELATION|{source}|{target}|{kind}|{keyword}|{sentence}")
        return "\n".join(lines)

    def _rule_extract_keywords(self, v: dict) -> str:
        query = v["query"].lower()
        known = [n for n in v["entity_names"].lower().split("\n") if n.strip()]
        matched: list[str] = []
        consumed = query
        for name in sorted(set(known), key=len, reverse=True):
            pattern = rf"\b{re.escape(name)}\b"
            if re.search(pattern, consumed):
                matched.append(name)
                consumed = re.sub(pattern, " ", consumed)
        residue = [
            w
            for w in re.findall(r"[a-z0-9]+", consumed)
            if w not in STOPWORDS
        ]
        low = ", ".join(sorted(set(matched)))
        high = ", ".join(sorted(set(residue)))
        return f"LOW: {low}\nHIGH: {high}"

    def _rule_classify_picos(self, v: dict) -> str:
        text = f"{v['title']} {v['abstract']}".lower()
        in_scope = any(term in text for term in SCOPE_TERMS)
        interventions = sorted(
            name
            for name, etype in find_entities(text).items()
            if etype == "intervention"
        )
        if not in_scope:
            return "VERDICT: EXCLUDE; RATIONALE: population outside the review scope"
        if not interventions:
            return "VERDICT: EXCLUDE; RATIONALE: no exercise intervention identified"
        if "randomized controlled trial" in text or "randomised controlled trial" in text:
            return (
                "VERDICT: INCLUDE; RATIONALE: randomized trial of "
                f"{interventions[0]} in an in-scope population"
            )
        return "VERDICT: UNCERTAIN; RATIONALE: study design not stated; full-text review needed"

    def _rule_classify_measurement(self, v: dict) -> str:
        text = f"{v['title']} {v['abstract']}".lower()
        objective = [i for i in OBJECTIVE_INSTRUMENTS if re.search(rf"\b{re.escape(i)}\b", text)]
        subjective = [i for i in SUBJECTIVE_INSTRUMENTS if re.search(rf"\b{re.escape(i)}\b", text)]
        instruments = ", ".join(sorted(objective + subjective))
        if objective and subjective:
            category = "mixed_methods"
        elif objective:
            category = "objective_only"
        elif subjective:
            category = "subjective_scales"
        elif "survey" in text or "questionnaire" in text:
            category = "survey_only"
        else:
            category = "insufficient_information"
        return f"CATEGORY: {category}; INSTRUMENTS: {instruments}"

    def _rule_summarize(self, v: dict) -> str:
        fragments: set[str] = set()
        for line in v["fragments"].split("\n"):
            for part in line.split(" | "):
                if part.strip():
                    fragments.add(part.strip())
        return " | ".join(sorted(fragments))

    # -- structured analysis -------------------------------------------------

    def _rule_think(self, v: dict) -> str:
        entity_types: dict[str, str] = {}
        entity_rows: dict[str, tuple[str, str]] = {}  # name -> (keys csv, description)
        for line in v["entities"].split("\n"):
            if "|" not in line:
                continue
            parts = line.split("|", 3)
            name, etype = parts[0].strip(), parts[1].strip()
            entity_types[name] = etype
            if len(parts) == 4:
                entity_rows[name] = (parts[2].strip(), parts[3].strip())

        triples: dict[tuple[str, str, str], tuple[set[str], str]] = {}

        def add_triple(source, target, kind, keys: Iterable[str], desc: str):
            slot = triples.setdefault((source, target, kind), (set(), desc))
            slot[0].update(keys)

        for line in sorted(l for l in v["relations"].split("\n") if l.strip()):
            parts = line.split("|")
            if len(parts) < 5:
                continue
            source, target, kind, keys_csv, desc = (p.strip() for p in parts[:5])
            keys = {k.strip() for k in keys_csv.split(",") if k.strip()}
            add_triple(source, target, kind, keys, desc)

        chunk_rows = []
        for line in sorted(l for l in v["chunks"].split("\n") if l.strip()):
            parts = line.split("|", 2)
            if len(parts) < 3:
                continue
            chunk_rows.append((parts[0].strip(), parts[1].strip(), parts[2]))
        for _, doc_key, text in chunk_rows:
            for source, target, kind, _, sentence in find_relations(text.lower()):
                add_triple(source, target, kind, {doc_key}, sentence)
            for name, etype in find_entities(text.lower()).items():
                entity_types.setdefault(name, etype)

        def role_of(label: str) -> str:
            return TYPE_TO_ROLE.get(
                entity_types.get(label, ENTITY_LEXICON.get(label, "other")), "mediator"
            )

        causal = sorted((s, t) for (s, t, kind) in triples if kind == "causal")
        adjacency: dict[str, list[str]] = {}
        targets = set()
        for s, t in causal:
            adjacency.setdefault(s, []).append(t)
            targets.add(t)
        roots = sorted(set(adjacency) - targets) or sorted(adjacency)

        paths: list[tuple[str, ...]] = []

        def walk(node: str, path: tuple[str, ...]):
            nexts = [t for t in adjacency.get(node, []) if t not in path]
            if not nexts:
                if len(path) >= 2:
                    paths.append(path)
                return
            for t in sorted(nexts):
                walk(t, path + (t,))

        for root in roots:
            walk(root, (root,))
        paths.sort()

        lines = []
        by_type: dict[str, list[str]] = {}
        for name, etype in entity_types.items():
            by_type.setdefault(etype, []).append(name)
        absent = "not specified in retrieved evidence"
        lines.append(f"POPULATION: {', '.join(sorted(by_type.get('population', []))) or absent}")
        lines.append(f"INTERVENTION: {', '.join(sorted(by_type.get('intervention', []))) or absent}")
        all_chunk_text = " ".join(text.lower() for _, _, text in chunk_rows)
        comparison = (
            "usual care or control conditions as reported"
            if ("usual care" in all_chunk_text or "control group" in all_chunk_text)
            else absent
        )
        lines.append(f"COMPARISON: {comparison}")
        lines.append(f"OUTCOMES: {', '.join(sorted(by_type.get('outcome', []))) or absent}")

        for name in sorted(entity_rows):
            keys_csv, desc = entity_rows[name]
            if keys_csv:
                lines.append(f"CLAIM: {name}: {desc} | keys={keys_csv}")
        for (source, target, kind), (keys, desc) in sorted(triples.items()):
            lines.append(f"CLAIM: {desc} | keys={','.join(sorted(keys))}")
        for path in paths:
            lines.append("PATHWAY: " + " -> ".join(f"{n}:{role_of(n)}" for n in path))
        confounders = sorted(
            {s for (s, _, kind) in triples if kind == "confounds"}
            | set(by_type.get("confounder", []))
        )
        for name in confounders:
            lines.append(f"CONFOUNDER: {name}")
        for (source, target, kind) in sorted(triples):
            if kind in ("moderates", "confounds"):
                lines.append(f"NODE: {source} | {role_of(source)}")
                lines.append(f"NODE: {target} | {role_of(target)}")
                lines.append(f"EDGE: {source} -> {target} | {kind}")
        if not triples and not entity_types:
            lines.append("LIMITATION: no corpus evidence retrieved")
        elif not paths:
            lines.append("LIMITATION: no causal pathways identified in retrieved evidence")
        return "\n".join(lines)

    def _rule_compose_response(self, v: dict) -> str:
        query = v["query"]
        decomposition = v["decomposition"].strip()
        if v["no_evidence"] == "true":
            return "\n".join(
                [
                    "SUMMARY: no corpus evidence was retrieved for this query; "
                    "no grounded answer can be produced.",
                    f"PICOS: {decomposition or 'decomposition unavailable.'} "
                    "no corpus evidence is available for criteria mapping.",
                    "CONTEXT: the corpus contains no documents matching the query terms.",
                    f"LIMITATIONS: {v['limitations'].strip() or 'no corpus evidence retrieved'}",
                ]
            )
        markers = " ".join(f"[{k.strip()}]" for k in v["citation_keys"].split(",") if k.strip())
        pathways = v["pathways"].strip()
        summary = (
            f"SUMMARY: evidence from {v['n_documents']} corpus documents addresses: {query}"
        )
        if pathways:
            summary += " identified pathways: " + "; ".join(pathways.split("\n")) + "."
        summary += f" {markers}"
        picos = f"PICOS: {decomposition}"
        claims = v["claims"].strip()
        if claims:
            picos += "\nevidence: " + claims
        context = "CONTEXT: " + (v["excerpts"].strip() or f"supporting corpus excerpts {markers}")
        limitations = "LIMITATIONS: " + (v["limitations"].strip() or "none identified")
        return "\n".join([summary, picos, context, limitations])
