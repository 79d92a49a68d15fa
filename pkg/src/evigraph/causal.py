"""Evidence-grounded causal graphs: construction, validation, diagram text.

Nodes carry pathway roles; edges carry (document key, chunk id) evidence and
one of three kinds. Acyclicity applies to the causal-edge subgraph only, so a
moderator edge into a pathway is legal even where it would close a mixed
cycle. Serialization is a fixed subset of the Mermaid flowchart grammar with
deterministic ordering, and parses back with this module's own inverse.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .errors import EngineError

if TYPE_CHECKING:  # pragma: no cover
    from .agent import ThinkPlan
    from .retrieval import RetrievalBundle

NODE_ROLES = frozenset(
    {"population", "intervention", "mediator", "moderator", "confounder", "outcome", "mechanism"}
)
EDGE_KINDS = frozenset({"causal", "moderates", "confounds"})

# Dotted-arrow conventions are fixed so diagram round-trips are exact.
_EDGE_SYNTAX = {
    "causal": "{a} --> {b}",
    "moderates": "{a} -.-> {b}",
    "confounds": "{a} -. confounds .-> {b}",
}

_CONFOUNDS_RE = re.compile(r"^(\S+) -\. confounds \.-> (\S+)$")
_MODERATES_RE = re.compile(r"^(\S+) -\.-> (\S+)$")
_CAUSAL_RE = re.compile(r"^(\S+) --> (\S+)$")
_NODE_RE = re.compile(r"^(\S+)\[(.*)\]$")


class InvalidGraph(EngineError):
    code = "INVALID_GRAPH"


class DiagramParseError(EngineError):
    code = "DIAGRAM_PARSE_ERROR"


def slug(label: str) -> str:
    """Stable node id: lowercase label with spaces as underscores."""
    return " ".join(label.lower().split()).replace(" ", "_")


@dataclass(frozen=True)
class CausalNode:
    id: str
    label: str
    role: str

    def __post_init__(self):
        if self.role not in NODE_ROLES:
            raise ValueError(f"unknown node role: {self.role}")


@dataclass(frozen=True)
class CausalEdge:
    from_id: str
    to_id: str
    edge_kind: str
    evidence: tuple[tuple[str, str], ...]  # (document key, chunk id) pairs

    def __post_init__(self):
        if self.edge_kind not in EDGE_KINDS:
            raise ValueError(f"unknown edge kind: {self.edge_kind}")

    @property
    def triple(self) -> tuple[str, str, str]:
        return (self.from_id, self.to_id, self.edge_kind)


@dataclass
class CausalGraph:
    nodes: list[CausalNode] = field(default_factory=list)
    edges: list[CausalEdge] = field(default_factory=list)

    def node_ids(self) -> set[str]:
        return {n.id for n in self.nodes}

    def edge_triples(self) -> set[tuple[str, str, str]]:
        return {e.triple for e in self.edges}

    def is_empty(self) -> bool:
        return not self.nodes and not self.edges

    def evidence_keys(self) -> set[str]:
        return {doc for edge in self.edges for doc, _ in edge.evidence}


@dataclass(frozen=True)
class Violation:
    kind: str  # cycle | dangling_endpoint | ungrounded_edge | role_kind_mismatch | duplicate_node
    detail: str


@dataclass(frozen=True)
class RejectedProposal:
    from_label: str
    to_label: str
    edge_kind: str
    reason: str


@dataclass
class BuildResult:
    graph: CausalGraph
    rejected_edges: list[RejectedProposal] = field(default_factory=list)
    dropped_nodes: list[str] = field(default_factory=list)
    notice: str | None = None


def causal_cycle_nodes(nodes: set[str], edges: list[tuple[str, str]]) -> set[str]:
    """Nodes on a cycle of the given directed edges (Kahn peeling leftover)."""
    adjacency: dict[str, set[str]] = {n: set() for n in nodes}
    indegree: dict[str, int] = {n: 0 for n in nodes}
    for a, b in edges:
        if b not in adjacency[a]:
            adjacency[a].add(b)
            indegree[b] += 1
    queue = [n for n in nodes if indegree[n] == 0]
    remaining = set(nodes)
    while queue:
        n = queue.pop()
        remaining.discard(n)
        for m in adjacency[n]:
            indegree[m] -= 1
            if indegree[m] == 0:
                queue.append(m)
    return remaining


def validate(graph: CausalGraph) -> list[Violation]:
    """Report every structural violation; an empty list means the graph is valid."""
    violations: list[Violation] = []
    seen_ids: set[str] = set()
    for node in graph.nodes:
        if node.id in seen_ids:
            violations.append(Violation("duplicate_node", node.id))
        seen_ids.add(node.id)
    roles = {n.id: n.role for n in graph.nodes}
    for edge in graph.edges:
        for endpoint in (edge.from_id, edge.to_id):
            if endpoint not in roles:
                violations.append(
                    Violation("dangling_endpoint", f"{endpoint} in {edge.triple}")
                )
        if not edge.evidence:
            violations.append(Violation("ungrounded_edge", str(edge.triple)))
        if edge.edge_kind == "moderates" and roles.get(edge.from_id) not in (None, "moderator"):
            violations.append(Violation("role_kind_mismatch", str(edge.triple)))
        if edge.edge_kind == "confounds" and roles.get(edge.from_id) not in (None, "confounder"):
            violations.append(Violation("role_kind_mismatch", str(edge.triple)))
    causal_edges = [
        (e.from_id, e.to_id)
        for e in graph.edges
        if e.edge_kind == "causal" and e.from_id in roles and e.to_id in roles
    ]
    cycle = causal_cycle_nodes(set(roles), causal_edges)
    if cycle:
        violations.append(Violation("cycle", ",".join(sorted(cycle))))
    return violations


def _reachable(adjacency: dict[str, set[str]], start: str, goal: str) -> bool:
    stack, seen = [start], set()
    while stack:
        node = stack.pop()
        if node == goal:
            return True
        if node in seen:
            continue
        seen.add(node)
        stack.extend(adjacency.get(node, ()))
    return False


def _label_words_in(text: str, label: str) -> bool:
    return re.search(rf"\b{re.escape(label.lower())}\b", text.lower()) is not None


def build_graph(bundle: "RetrievalBundle", plan: "ThinkPlan") -> BuildResult:
    """Turn a think plan into a validated graph, keeping only supported edges.

    Every proposed edge must be backed by a matched relation of a compatible
    kind or by a retrieved chunk mentioning both endpoint labels; the backing
    document keys (with chunk ids) become the edge evidence. Unsupported
    proposals land in the rejection list, never in the graph. Causal edges
    that would close a cycle are rejected deterministically in sorted order.
    """
    if bundle.is_empty():
        return BuildResult(
            graph=CausalGraph(),
            notice="no corpus evidence retrieved; graph omitted",
        )

    proposed_nodes: dict[str, str] = {}

    def propose_node(label: str, role: str):
        norm = " ".join(label.lower().split())
        if norm and norm not in proposed_nodes:
            proposed_nodes[norm] = role if role in NODE_ROLES else "mediator"

    for pathway in plan.pathways:
        for label, role in zip(pathway.labels, pathway.roles):
            propose_node(label, role)
    for label, role in plan.graph_plan.nodes:
        propose_node(label, role)

    proposed_edges: list[tuple[str, str, str]] = []
    for pathway in plan.pathways:
        for a, b in zip(pathway.labels, pathway.labels[1:]):
            proposed_edges.append(
                (" ".join(a.lower().split()), " ".join(b.lower().split()), "causal")
            )
    for a, b, kind in plan.graph_plan.edges:
        proposed_edges.append(
            (" ".join(a.lower().split()), " ".join(b.lower().split()), kind)
        )
    # Deterministic processing order; duplicates collapse to the first.
    proposed_edges = sorted(set(proposed_edges))

    chunk_of_doc: dict[str, str] = {}
    for hit in sorted(bundle.chunks, key=lambda h: h.chunk_id):
        chunk_of_doc.setdefault(hit.doc_key, hit.chunk_id)

    def evidence_for(a: str, b: str, kind: str) -> list[tuple[str, str]]:
        found: set[tuple[str, str]] = set()
        for rel, _ in bundle.matched_relations:
            if rel.source == a and rel.target == b and rel.relation_kind == kind:
                for doc in rel.source_keys:
                    found.add((doc, chunk_of_doc.get(doc, f"{doc}:0")))
        for hit in bundle.chunks:
            if _label_words_in(hit.text, a) and _label_words_in(hit.text, b):
                found.add((hit.doc_key, hit.chunk_id))
        return sorted(found)

    grounded_nodes = {
        label: role
        for label, role in proposed_nodes.items()
        if bundle.contains_label(label)
    }
    dropped_nodes = sorted(set(proposed_nodes) - set(grounded_nodes))

    rejected: list[RejectedProposal] = []
    kept_edges: list[CausalEdge] = []
    adjacency: dict[str, set[str]] = {}
    for a, b, kind in proposed_edges:
        if a not in grounded_nodes or b not in grounded_nodes:
            rejected.append(RejectedProposal(a, b, kind, "ungrounded endpoint"))
            continue
        if a == b:
            rejected.append(RejectedProposal(a, b, kind, "self loop"))
            continue
        if kind == "moderates" and grounded_nodes[a] != "moderator":
            rejected.append(RejectedProposal(a, b, kind, "origin is not a moderator"))
            continue
        if kind == "confounds" and grounded_nodes[a] != "confounder":
            rejected.append(RejectedProposal(a, b, kind, "origin is not a confounder"))
            continue
        evidence = evidence_for(a, b, kind)
        if not evidence:
            rejected.append(RejectedProposal(a, b, kind, "no supporting evidence in bundle"))
            continue
        if kind == "causal" and _reachable(adjacency, slug(b), slug(a)):
            rejected.append(RejectedProposal(a, b, kind, "would close a causal cycle"))
            continue
        kept_edges.append(
            CausalEdge(
                from_id=slug(a), to_id=slug(b), edge_kind=kind, evidence=tuple(evidence)
            )
        )
        if kind == "causal":
            adjacency.setdefault(slug(a), set()).add(slug(b))

    used_ids = {e.from_id for e in kept_edges} | {e.to_id for e in kept_edges}
    nodes = []
    for label in sorted(grounded_nodes):
        node_id = slug(label)
        if node_id in used_ids or not kept_edges:
            nodes.append(
                CausalNode(id=node_id, label=label.title(), role=grounded_nodes[label])
            )
    # Nodes left out because no surviving edge touches them.
    isolated = sorted(
        label for label in grounded_nodes if slug(label) not in used_ids and kept_edges
    )
    dropped_nodes.extend(isolated)

    graph = CausalGraph(nodes=nodes, edges=sorted(kept_edges, key=lambda e: e.triple))
    problems = validate(graph)
    if problems:  # construction above guarantees validity
        raise InvalidGraph(f"internal construction error: {problems}")
    notice = None
    if not kept_edges and not nodes:
        notice = "no supported causal structure found in the retrieved evidence"
    return BuildResult(
        graph=graph, rejected_edges=rejected, dropped_nodes=dropped_nodes, notice=notice
    )


def to_diagram_text(graph: CausalGraph) -> str:
    """Serialize to the fixed Mermaid-subset flowchart text.

    Node lines sort by id and edge lines by (from, to, kind), so identical
    graphs produce byte-identical text.
    """
    problems = validate(graph)
    if problems:
        raise InvalidGraph("; ".join(f"{v.kind}: {v.detail}" for v in problems))
    lines = ["graph LR"]
    for node in sorted(graph.nodes, key=lambda n: n.id):
        lines.append(f"{node.id}[{node.label}]")
    for edge in sorted(graph.edges, key=lambda e: e.triple):
        lines.append(_EDGE_SYNTAX[edge.edge_kind].format(a=edge.from_id, b=edge.to_id))
    return "\n".join(lines)


@dataclass
class ParsedDiagram:
    nodes: dict[str, str]  # id -> label
    edges: set[tuple[str, str, str]]


def parse_diagram_text(text: str) -> ParsedDiagram:
    """Inverse of :func:`to_diagram_text` over node ids, labels and edge triples."""
    lines = [line for line in text.split("\n") if line.strip()]
    if not lines or lines[0].strip() != "graph LR":
        raise DiagramParseError("missing 'graph LR' header")
    nodes: dict[str, str] = {}
    edges: set[tuple[str, str, str]] = set()
    for line in lines[1:]:
        line = line.strip()
        m = _CONFOUNDS_RE.match(line)
        if m:
            edges.add((m.group(1), m.group(2), "confounds"))
            continue
        m = _MODERATES_RE.match(line)
        if m:
            edges.add((m.group(1), m.group(2), "moderates"))
            continue
        m = _CAUSAL_RE.match(line)
        if m:
            edges.add((m.group(1), m.group(2), "causal"))
            continue
        m = _NODE_RE.match(line)
        if m:
            nodes[m.group(1)] = m.group(2)
            continue
        raise DiagramParseError(f"unrecognized diagram line: {line!r}")
    return ParsedDiagram(nodes=nodes, edges=edges)
