"""Evidence-first conversational agent.

Every answer follows the mandatory order: extract keywords, retrieve, run the
structured think analysis, build the grounded causal graph, compose. There is
no content path that skips retrieval; when the bundle is empty the response
says so, cites nothing and carries an empty graph, because answers are never
produced from provider parametric text alone. Each step appends to an
execution trace that the evaluation harness audits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .causal import BuildResult, CausalGraph, build_graph, to_diagram_text
from .errors import EngineError
from .kgindex import GraphStore
from .providers import GenerationRequest, Provider
from .retrieval import (
    EmptyQuery,
    RetrievalBundle,
    RetrievalConfig,
    extract_keywords,
    retrieve,
)
from .utils import Clock, token_count


class PlanParseError(EngineError):
    code = "PLAN_PARSE_ERROR"


class ComposeError(EngineError):
    code = "COMPOSE_ERROR"


@dataclass(frozen=True)
class Claim:
    text: str
    keys: tuple[str, ...]


@dataclass(frozen=True)
class Pathway:
    labels: tuple[str, ...]
    roles: tuple[str, ...]

    def arrow(self) -> str:
        return " -> ".join(self.labels)


@dataclass
class GraphPlan:
    nodes: list[tuple[str, str]] = field(default_factory=list)  # (label, role)
    edges: list[tuple[str, str, str]] = field(default_factory=list)  # (from, to, kind)


@dataclass
class ThinkPlan:
    decomposition: dict[str, str] = field(default_factory=dict)
    evidence_map: list[Claim] = field(default_factory=list)
    pathways: list[Pathway] = field(default_factory=list)
    confounders: list[str] = field(default_factory=list)
    graph_plan: GraphPlan = field(default_factory=GraphPlan)
    limitations: list[str] = field(default_factory=list)


@dataclass
class AgentResponse:
    executive_summary: str
    picos_analysis: str
    causal_graph: CausalGraph
    diagram_text: str
    research_context: str
    limitations: str
    citations: list[str]

    def sections(self) -> dict[str, str]:
        return {
            "executive_summary": self.executive_summary,
            "picos_analysis": self.picos_analysis,
            "causal_graph": self.diagram_text,
            "research_context": self.research_context,
            "limitations": self.limitations,
        }

    @property
    def word_count(self) -> int:
        return token_count(" ".join(self.sections().values()))


EVENT_ANALYSIS = "analysis"
EVENT_RETRIEVAL = "retrieval"
EVENT_GENERATION = "generation"
EVENT_GRAPH = "graph"


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    timestamp: str
    kind: str
    name: str
    detail: dict


@dataclass
class AgentTrace:
    trace_id: str
    events: list[TraceEvent] = field(default_factory=list)

    def first_index(self, kind: str) -> int | None:
        for event in self.events:
            if event.kind == kind:
                return event.seq
        return None

    def has_retrieval_before_generation(self) -> bool:
        retrieval = self.first_index(EVENT_RETRIEVAL)
        generation = self.first_index(EVENT_GENERATION)
        if retrieval is None:
            return False
        return generation is None or retrieval < generation

    def to_lines(self) -> str:
        return "\n".join(
            f"{e.seq}|{e.timestamp}|{e.kind}|{e.name}|{json.dumps(e.detail, sort_keys=True)}"
            for e in self.events
        )


@dataclass
class AnswerResult:
    response: AgentResponse
    trace: AgentTrace
    bundle: RetrievalBundle
    plan: ThinkPlan
    build: BuildResult


def _parse_plan(text: str) -> ThinkPlan:
    plan = ThinkPlan()
    recognized = False
    for raw_line in text.split("\n"):
        line = raw_line.strip()
        if not line:
            continue
        tag, _, rest = line.partition(":")
        tag, rest = tag.strip().upper(), rest.strip()
        if tag in ("POPULATION", "INTERVENTION", "COMPARISON", "OUTCOMES"):
            plan.decomposition[tag.lower()] = rest
        elif tag == "CLAIM":
            claim_text, _, keys_part = rest.partition("| keys=")
            keys = tuple(
                sorted(k.strip() for k in keys_part.split(",") if k.strip())
            )
            plan.evidence_map.append(Claim(text=claim_text.strip(), keys=keys))
        elif tag == "PATHWAY":
            labels, roles = [], []
            for hop in rest.split("->"):
                label, _, role = hop.strip().partition(":")
                if not label.strip():
                    raise PlanParseError(f"empty pathway node in {line!r}")
                labels.append(label.strip())
                roles.append(role.strip() or "mediator")
            if len(labels) < 2:
                raise PlanParseError(f"pathway needs at least two nodes: {line!r}")
            plan.pathways.append(Pathway(labels=tuple(labels), roles=tuple(roles)))
        elif tag == "CONFOUNDER":
            plan.confounders.append(rest)
        elif tag == "NODE":
            label, _, role = rest.partition("|")
            plan.graph_plan.nodes.append((label.strip(), role.strip() or "mediator"))
        elif tag == "EDGE":
            spec, _, kind = rest.partition("|")
            a, _, b = spec.partition("->")
            if not a.strip() or not b.strip():
                raise PlanParseError(f"malformed edge line: {line!r}")
            plan.graph_plan.edges.append((a.strip(), b.strip(), kind.strip() or "causal"))
        elif tag == "LIMITATION":
            plan.limitations.append(rest)
        else:
            raise PlanParseError(f"unrecognized plan line: {line!r}")
        recognized = True
    if not recognized:
        raise PlanParseError("provider returned no recognizable plan structure")
    return plan


def _bundle_variables(query: str, bundle: RetrievalBundle) -> dict[str, str]:
    entities = [
        f"{e.canonical_name}|{e.entity_type}|{','.join(sorted(e.source_keys))}|{e.description}"
        for e in bundle.all_entities()
    ]
    relations = [
        f"{r.source}|{r.target}|{r.relation_kind}|{','.join(sorted(r.source_keys))}|{r.description}"
        for r, _ in bundle.matched_relations
    ]
    chunks = [f"{h.chunk_id}|{h.doc_key}|{h.text}" for h in bundle.chunks]
    return {
        "query": query,
        "entities": "\n".join(entities),
        "relations": "\n".join(relations),
        "chunks": "\n".join(chunks),
    }


class Agent:
    """Stateless-per-call agent over a store snapshot."""

    def __init__(
        self,
        store: GraphStore,
        provider: Provider,
        retrieval_config: RetrievalConfig | None = None,
        clock: Clock | None = None,
    ):
        self.store = store
        self.provider = provider
        self.retrieval_config = retrieval_config or RetrievalConfig()
        self.clock = clock or Clock()
        self._trace_counter = 0

    # -- think ---------------------------------------------------------------

    def think(self, query: str, bundle: RetrievalBundle) -> ThinkPlan:
        """Run the structured analysis and ground it against the bundle.

        Pathways containing a node label that does not appear anywhere in the
        bundle are moved into the limitations list instead of the graph plan;
        claims keep only keys resolvable to the bundle provenance.
        """
        response = self.provider.generate(
            GenerationRequest("think", _bundle_variables(query, bundle))
        )
        plan = _parse_plan(response.text)

        grounded_claims: list[Claim] = []
        for claim in plan.evidence_map:
            keys = tuple(k for k in claim.keys if k in bundle.provenance_keys)
            if keys:
                grounded_claims.append(Claim(text=claim.text, keys=keys))
            else:
                plan.limitations.append(
                    f"claim without resolvable corpus evidence dropped: {claim.text}"
                )
        plan.evidence_map = grounded_claims

        grounded_pathways: list[Pathway] = []
        for pathway in plan.pathways:
            missing = [l for l in pathway.labels if not bundle.contains_label(l)]
            if missing:
                plan.limitations.append(
                    "pathway excluded; node(s) not in retrieved evidence: "
                    + ", ".join(missing)
                )
            else:
                grounded_pathways.append(pathway)
        if grounded_pathways and not plan.evidence_map:
            plan.limitations.extend(
                f"pathway lacks mapped evidence: {p.arrow()}" for p in grounded_pathways
            )
            grounded_pathways = []
        plan.pathways = grounded_pathways
        if bundle.is_empty() and "no corpus evidence retrieved" not in plan.limitations:
            plan.limitations.append("no corpus evidence retrieved")
        return plan

    # -- answer --------------------------------------------------------------

    def answer(self, query: str) -> AnswerResult:
        """Produce a five-section, fully grounded response for ``query``."""
        if not query.strip():
            raise EmptyQuery("query must be non-empty")
        self._trace_counter += 1
        trace = AgentTrace(trace_id=f"trace-{self._trace_counter:04d}")

        def record(kind: str, name: str, detail: dict):
            trace.events.append(
                TraceEvent(
                    seq=len(trace.events),
                    timestamp=self.clock.now_iso(),
                    kind=kind,
                    name=name,
                    detail=detail,
                )
            )

        keywords = extract_keywords(self.store, query, self.provider)
        record(
            EVENT_ANALYSIS,
            "extract_keywords",
            {"low": list(keywords.low_level), "high": list(keywords.high_level)},
        )

        bundle = retrieve(self.store, keywords, self.retrieval_config, self.provider)
        record(
            EVENT_RETRIEVAL,
            "retrieve",
            {
                "entities": len(bundle.matched_entities),
                "neighbors": len(bundle.neighbor_entities),
                "relations": len(bundle.matched_relations),
                "chunks": len(bundle.chunks),
                "provenance_keys": sorted(bundle.provenance_keys),
                "token_usage": [
                    bundle.token_usage.entity_tokens,
                    bundle.token_usage.relation_tokens,
                    bundle.token_usage.total_tokens,
                ],
            },
        )

        plan = self.think(query, bundle)
        record(
            EVENT_GENERATION,
            "think",
            {
                "claims": len(plan.evidence_map),
                "pathways": [p.arrow() for p in plan.pathways],
                "limitations": len(plan.limitations),
            },
        )

        build = build_graph(bundle, plan)
        record(
            EVENT_GRAPH,
            "build_graph",
            {
                "nodes": len(build.graph.nodes),
                "edges": len(build.graph.edges),
                "rejected": [
                    f"{r.from_label} -> {r.to_label} ({r.edge_kind}): {r.reason}"
                    for r in build.rejected_edges
                ],
                "notice": build.notice or "",
            },
        )

        response = self._compose(query, bundle, plan, build)
        record(
            EVENT_GENERATION,
            "compose",
            {"citations": response.citations, "words": response.word_count},
        )
        return AnswerResult(
            response=response, trace=trace, bundle=bundle, plan=plan, build=build
        )

    def _compose(
        self,
        query: str,
        bundle: RetrievalBundle,
        plan: ThinkPlan,
        build: BuildResult,
    ) -> AgentResponse:
        citations: set[str] = set()
        for claim in plan.evidence_map:
            citations.update(claim.keys)
        citations.update(build.graph.evidence_keys())
        excerpt_hits = bundle.chunks[:3]
        citations.update(h.doc_key for h in excerpt_hits)
        citations &= bundle.provenance_keys

        decomposition = "\n".join(
            f"{name}: {plan.decomposition.get(name, 'not specified')}"
            for name in ("population", "intervention", "comparison", "outcomes")
        )
        claims = "\n".join(
            f"{c.text} " + " ".join(f"[{k}]" for k in c.keys) for c in plan.evidence_map
        )
        pathways = "\n".join(p.arrow() for p in plan.pathways)
        excerpts = "\n".join(
            f"[{h.doc_key}] {' '.join(h.text.split()[:40])}" for h in excerpt_hits
        )
        limitation_items = list(plan.limitations)
        for r in build.rejected_edges:
            limitation_items.append(
                f"proposed edge not supported by retrieved evidence: "
                f"{r.from_label} -> {r.to_label} ({r.edge_kind}; {r.reason})"
            )
        if build.notice:
            limitation_items.append(build.notice)

        generated = self.provider.generate(
            GenerationRequest(
                "compose_response",
                {
                    "query": query,
                    "no_evidence": "true" if bundle.is_empty() else "false",
                    "n_documents": str(len(bundle.provenance_keys)),
                    "decomposition": decomposition,
                    "claims": claims,
                    "pathways": pathways,
                    "excerpts": excerpts,
                    "limitations": "\n".join(limitation_items),
                    "citation_keys": ", ".join(sorted(citations)),
                },
            )
        )
        sections = {"SUMMARY": "", "PICOS": "", "CONTEXT": "", "LIMITATIONS": ""}
        current: str | None = None
        for line in generated.text.split("\n"):
            tag, _, rest = line.partition(":")
            if tag in sections and (rest or not sections[tag]):
                current = tag
                sections[tag] = rest.strip()
            elif current:
                sections[current] = (sections[current] + "\n" + line).strip()
        empty = [tag for tag, text in sections.items() if not text.strip()]
        if empty:
            raise ComposeError(f"provider omitted sections: {', '.join(empty)}")

        limitations_text = sections["LIMITATIONS"]
        if not limitation_items and not build.rejected_edges:
            limitations_text = limitations_text or "none identified"

        return AgentResponse(
            executive_summary=sections["SUMMARY"],
            picos_analysis=sections["PICOS"],
            causal_graph=build.graph,
            diagram_text=to_diagram_text(build.graph),
            research_context=sections["CONTEXT"],
            limitations=limitations_text,
            citations=sorted(citations),
        )


def answer(
    query: str,
    store: GraphStore,
    cfg: RetrievalConfig,
    provider: Provider,
    clock: Clock | None = None,
) -> AnswerResult:
    """One-shot convenience wrapper around :class:`Agent`."""
    return Agent(store, provider, cfg, clock).answer(query)
