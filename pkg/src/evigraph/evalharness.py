"""Evaluation harness: rubric scoring, grounding proxies and report tables.

Human rubric judgment is replaced at desk scale by machine-checkable proxies:
retrieval success (a retrieval trace event plus at least one corpus-resolvable
citation), evidence quality (citation-marker coverage of the major response
sections), and hallucination (any citation or graph edge that fails to
resolve against the corpus). Accuracy comes from gold-phrase matching when a
question ships a gold answer, otherwise from a manual-entry file; the harness
never invents an accuracy number.

Aggregation is a pure fold over score records. The complexity-level breakdown
reports the baseline system against the pooled retrieval-backed systems, and
means are displayed with one decimal unless two are needed to be exact (so
8.75 prints as 8.75 while 10/3 prints as 3.3).
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .agent import AgentResponse, AgentTrace, EVENT_RETRIEVAL
from .corpus import DocumentRecord
from .errors import EngineError

SYSTEMS = ("vanilla", "causal_agent", "rag_only")
RAG_POOL = ("causal_agent", "rag_only")
EVIDENCE_QUALITY = ("Strong", "Moderate", "Weak", "None")

LEVEL_NAMES = {
    1: "Factual",
    2: "Comprehension",
    3: "Cross-Document",
    4: "Synthesis",
    5: "Advanced Reasoning",
    6: "Meta-Analysis",
}

_MARKER_RE = re.compile(r"\[([^\[\]]+)\]")


class MissingGoldAndManual(EngineError):
    """Accuracy unavailable: no gold answer and no manual entry."""

    code = "MISSING_GOLD_AND_MANUAL"


class IncompleteMatrix(EngineError):
    """A (question, system) pair has no score record."""

    code = "INCOMPLETE_MATRIX"

    def __init__(self, missing: Sequence[tuple[str, str]]):
        pairs = ", ".join(f"{q}/{s}" for q, s in sorted(missing))
        super().__init__(f"missing score records: {pairs}")
        self.missing = sorted(missing)


@dataclass(frozen=True)
class EvalQuestion:
    id: str
    level: int
    text: str
    multi_doc: bool = False
    gold: str | None = None

    def __post_init__(self):
        if self.level not in LEVEL_NAMES:
            raise ValueError(f"level out of range: {self.level}")


@dataclass(frozen=True)
class ScoreRecord:
    question_id: str
    system: str
    accuracy: int
    retrieval_success: bool
    evidence_quality: str
    hallucination: bool
    word_count: int

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ValueError(f"unknown system: {self.system}")
        if not 0 <= self.accuracy <= 10:
            raise ValueError(f"accuracy out of range: {self.accuracy}")
        if self.evidence_quality not in EVIDENCE_QUALITY:
            raise ValueError(f"unknown evidence quality: {self.evidence_quality}")


def _corpus_keys(corpus: Iterable) -> set[str]:
    keys = set()
    for item in corpus:
        keys.add(item.key if isinstance(item, DocumentRecord) else str(item))
    return keys


def score_response(
    resp: AgentResponse,
    trace: AgentTrace,
    q: EvalQuestion,
    corpus: Iterable,
    system: str = "causal_agent",
    manual: dict[tuple[str, str], int] | None = None,
) -> ScoreRecord:
    """Score one response against the corpus-grounding proxies and gold answer.

    Args:
        resp: the agent response produced for ``q``.
        trace: the execution trace of that answer call.
        q: the question, optionally carrying a gold phrase.
        corpus: document records (or bare keys) defining resolvability.
        system: which system produced the response.
        manual: manual accuracy entries keyed by (question_id, system), used
            when the question has no gold answer.

    Raises:
        MissingGoldAndManual: neither a gold phrase nor a manual entry exists.
    """
    keys = _corpus_keys(corpus)
    resolvable = [c for c in resp.citations if c in keys]

    retrieval_success = (
        trace.first_index(EVENT_RETRIEVAL) is not None and bool(resolvable)
    )

    major_sections = (resp.executive_summary, resp.picos_analysis, resp.research_context)
    if not resp.citations:
        quality = "None"
    else:
        section_covered = [
            any(m in keys for m in _MARKER_RE.findall(section))
            for section in major_sections
        ]
        if all(section_covered):
            quality = "Strong"
        elif len(resolvable) <= 1:
            quality = "Weak"
        else:
            quality = "Moderate"

    hallucination = any(c not in keys for c in resp.citations)
    for edge in resp.causal_graph.edges:
        if not edge.evidence or any(doc not in keys for doc, _ in edge.evidence):
            hallucination = True

    full_text = " ".join(resp.sections().values()).lower()
    if q.gold:
        accuracy = 10 if q.gold.lower() in full_text else 0
    elif manual and (q.id, system) in manual:
        accuracy = manual[(q.id, system)]
    else:
        raise MissingGoldAndManual(f"no gold or manual accuracy for {q.id}/{system}")

    return ScoreRecord(
        question_id=q.id,
        system=system,
        accuracy=accuracy,
        retrieval_success=retrieval_success,
        evidence_quality=quality,
        hallucination=hallucination,
        word_count=resp.word_count,
    )


# -- aggregation ---------------------------------------------------------------


@dataclass
class SystemSummary:
    system: str
    total: int
    max_total: int
    overall_pct: float
    avg_per_question: float
    retrieval_successes: int
    retrieval_rate_pct: float
    citation_questions: int
    failures: int
    perfects: int
    hallucinations: int
    avg_words: float


@dataclass
class LevelRow:
    level: int
    name: str
    n_questions: int
    baseline_mean: float | None
    baseline_pct: float | None
    rag_mean: float | None
    rag_pct: float | None


@dataclass
class EvalReport:
    n_questions: int
    systems: dict[str, SystemSummary]
    levels: list[LevelRow]
    overall: LevelRow

    def to_dict(self) -> dict:
        return {
            "n_questions": self.n_questions,
            "systems": {name: vars(s) for name, s in self.systems.items()},
            "levels": [vars(row) for row in self.levels],
            "overall": vars(self.overall),
        }


def format_score(mean: float) -> str:
    """Render a mean score the way the report tables do (3.3, 5.0, 8.75)."""
    hundred = mean * 100
    ten = mean * 10
    if abs(hundred - round(hundred)) < 1e-9 and abs(ten - round(ten)) > 1e-9:
        return f"{mean:.2f}"
    return f"{round(mean, 1):.1f}"


def format_pct(pct: float) -> str:
    """Render a percentage (33.33 -> 33%, 87.5 -> 87.5%, 100 -> 100%)."""
    if abs(pct - round(pct)) < 1e-9:
        return f"{round(pct)}%"
    tenth = pct * 10
    if abs(tenth - round(tenth)) < 1e-9:
        return f"{pct:.1f}%"
    return f"{round(pct)}%"


def aggregate(
    records: Sequence[ScoreRecord], questions: Sequence[EvalQuestion]
) -> EvalReport:
    """Fold score records into the overall and per-level report.

    Requires exactly one record per (question, system) pair for every system
    that appears; anything missing raises :class:`IncompleteMatrix`. The
    result is invariant under record permutation.
    """
    question_ids = [q.id for q in questions]
    by_level: dict[int, list[str]] = {}
    for q in questions:
        by_level.setdefault(q.level, []).append(q.id)

    present_systems = sorted({r.system for r in records}, key=SYSTEMS.index)
    index: dict[tuple[str, str], ScoreRecord] = {}
    extras: list[tuple[str, str]] = []
    for record in records:
        pair = (record.question_id, record.system)
        if pair in index or record.question_id not in question_ids:
            extras.append(pair)
        index[pair] = record
    missing = [
        (qid, system)
        for system in present_systems
        for qid in question_ids
        if (qid, system) not in index
    ]
    if missing or extras:
        raise IncompleteMatrix(missing + extras)

    n = len(question_ids)
    systems: dict[str, SystemSummary] = {}
    for system in present_systems:
        rows = [index[(qid, system)] for qid in question_ids]
        total = sum(r.accuracy for r in rows)
        successes = sum(1 for r in rows if r.retrieval_success)
        systems[system] = SystemSummary(
            system=system,
            total=total,
            max_total=10 * n,
            overall_pct=100.0 * total / (10 * n),
            avg_per_question=total / n,
            retrieval_successes=successes,
            retrieval_rate_pct=100.0 * successes / n,
            citation_questions=sum(1 for r in rows if r.evidence_quality != "None"),
            failures=sum(1 for r in rows if r.accuracy == 0),
            perfects=sum(1 for r in rows if r.accuracy == 10),
            hallucinations=sum(1 for r in rows if r.hallucination),
            avg_words=sum(r.word_count for r in rows) / n,
        )

    baseline = "vanilla" if "vanilla" in systems else None
    rag_systems = [s for s in present_systems if s in RAG_POOL]

    def level_stats(qids: list[str], pool: list[str]) -> tuple[float, float] | None:
        scores = [index[(qid, s)].accuracy for s in pool for qid in qids]
        if not scores:
            return None
        mean = sum(scores) / len(scores)
        return mean, mean * 10

    def make_row(level: int, qids: list[str]) -> LevelRow:
        base = level_stats(qids, [baseline]) if baseline else None
        rag = level_stats(qids, rag_systems)
        return LevelRow(
            level=level,
            name=LEVEL_NAMES[level],
            n_questions=len(qids),
            baseline_mean=base[0] if base else None,
            baseline_pct=base[1] if base else None,
            rag_mean=rag[0] if rag else None,
            rag_pct=rag[1] if rag else None,
        )

    levels = [make_row(level, by_level[level]) for level in sorted(by_level)]
    # Overall row spans every question; reuse the same pooling rules.
    base_overall = level_stats(question_ids, [baseline]) if baseline else None
    rag_overall = level_stats(question_ids, rag_systems)
    overall = LevelRow(
        level=0,
        name="Overall",
        n_questions=n,
        baseline_mean=base_overall[0] if base_overall else None,
        baseline_pct=base_overall[1] if base_overall else None,
        rag_mean=rag_overall[0] if rag_overall else None,
        rag_pct=rag_overall[1] if rag_overall else None,
    )
    return EvalReport(n_questions=n, systems=systems, levels=levels, overall=overall)


def format_report(report: EvalReport) -> str:
    """Readable text tables mirroring the overall and per-level breakdowns."""
    lines = [f"Overall Performance ({report.n_questions} questions)"]
    names = list(report.systems)
    width = max([len(s) for s in names] + [12])

    def row(label: str, values: list[str]) -> str:
        cells = " | ".join(v.ljust(width) for v in values)
        return f"{label.ljust(34)}| {cells}"

    lines.append(row("Metric", [s for s in names]))
    lines.append("-" * len(lines[-1]))
    summaries = [report.systems[s] for s in names]
    lines.append(row(f"Total Score (out of {10 * report.n_questions})", [str(s.total) for s in summaries]))
    lines.append(row("Overall Accuracy", [format_pct(s.overall_pct) for s in summaries]))
    lines.append(row("Avg. Score per Question", [f"{format_score(s.avg_per_question)}/10" for s in summaries]))
    lines.append(
        row(
            "Retrieval Success Rate",
            [
                f"{format_pct(s.retrieval_rate_pct)} ({s.retrieval_successes}/{report.n_questions})"
                for s in summaries
            ],
        )
    )
    lines.append(row("Questions with Citations", [f"{s.citation_questions}/{report.n_questions}" for s in summaries]))
    lines.append(row("Complete Failures (score=0)", [str(s.failures) for s in summaries]))
    lines.append(row("Perfect Scores (score=10)", [str(s.perfects) for s in summaries]))
    lines.append(row("Hallucination Incidents", [str(s.hallucinations) for s in summaries]))
    lines.append(row("Avg. Response Length (words)", [format_score(s.avg_words) for s in summaries]))

    lines.append("")
    lines.append("Performance by Complexity Level")
    header = f"{'Level'.ljust(22)}| N | {'baseline'.ljust(15)}| {'retrieval pool'.ljust(15)}"
    lines.append(header)
    lines.append("-" * len(header))

    def cell(mean: float | None, pct: float | None) -> str:
        if mean is None:
            return "n/a"
        return f"{format_score(mean)}/10 ({format_pct(pct)})"

    for level_row in report.levels + [report.overall]:
        label = f"L{level_row.level}: {level_row.name}" if level_row.level else level_row.name
        lines.append(
            f"{label.ljust(22)}| {level_row.n_questions} | "
            f"{cell(level_row.baseline_mean, level_row.baseline_pct).ljust(15)}| "
            f"{cell(level_row.rag_mean, level_row.rag_pct).ljust(15)}"
        )
    return "\n".join(lines)


# -- fixture files ---------------------------------------------------------------


def load_questions(path: str | Path) -> list[EvalQuestion]:
    """Question bank: tab-delimited {id, level, multi_doc, text, gold}."""
    questions = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        filtered = (line for line in fh if not line.startswith("#"))
        for row in csv.DictReader(filtered, delimiter="\t"):
            questions.append(
                EvalQuestion(
                    id=row["id"],
                    level=int(row["level"]),
                    text=row["text"],
                    multi_doc=row.get("multi_doc", "").strip().lower() in ("1", "true", "yes"),
                    gold=(row.get("gold") or "").strip() or None,
                )
            )
    ids = [q.id for q in questions]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate question ids in bank")
    return questions


def load_score_records(path: str | Path) -> list[ScoreRecord]:
    """Transcribed score records: comma-delimited, '#' comment lines allowed."""
    records = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        filtered = (line for line in fh if not line.startswith("#"))
        for row in csv.DictReader(filtered):
            records.append(
                ScoreRecord(
                    question_id=row["question_id"],
                    system=row["system"],
                    accuracy=int(row["accuracy"]),
                    retrieval_success=row["retrieval_success"].strip().lower() == "true",
                    evidence_quality=row["evidence_quality"].strip(),
                    hallucination=row["hallucination"].strip().lower() == "true",
                    word_count=int(row["word_count"]),
                )
            )
    return records


def load_manual_scores(path: str | Path) -> dict[tuple[str, str], int]:
    """Manual accuracy entries: comma-delimited {question_id, system, accuracy}."""
    manual = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        filtered = (line for line in fh if not line.startswith("#"))
        for row in csv.DictReader(filtered):
            manual[(row["question_id"], row["system"])] = int(row["accuracy"])
    return manual
