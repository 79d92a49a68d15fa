"""Corpus ingestion: cleaning, filtering and keyed access to abstract records.

Raw records (key, title, abstract, issn, year) are cleaned and filtered into
an immutable corpus of :class:`DocumentRecord` objects that every downstream
stage (screening, graph build, retrieval, evaluation) consumes. Cleaning is a
total, idempotent function; filtering applies a fixed predicate order so a
rejection always names the first rule that failed.

Cleaning rule order (fixed, order-sensitive):
    1. strip markup tags ``<...>`` to a fixpoint
    2. lowercase
    3. strip leading section-header labels ("results:", "methods:", ...)
    4. collapse whitespace runs to single spaces and trim

Filter predicate order (fixed): length, issn, year, keyword. Duplicate keys
are checked before the predicates since a key can only be accepted once per
ingestion run.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EngineError

DEFAULT_HEADER_LABELS = (
    "introduction",
    "methods",
    "results",
    "conclusion",
    "background",
    "objective",
    "discussion",
)

FORMAT_RECORD_LINES = "record-lines"
FORMAT_DELIMITED = "delimited-table"

_TAG_RE = re.compile(r"<[^>]*>")
_WS_RE = re.compile(r"\s+")
_ISSN_RE = re.compile(r"^\d{4}-\d{3}[\dX]$")

_REQUIRED_FIELDS = ("key", "title", "abstract", "issn", "year")


class ParseError(EngineError):
    """Corpus file is malformed; ``line`` points at the offending line."""

    code = "PARSE_ERROR"

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyCorpus(EngineError):
    """Ingestion produced zero accepted records."""

    code = "EMPTY_CORPUS"


class RejectReason(str, Enum):
    TOO_SHORT = "TooShort"
    INVALID_ISSN = "InvalidIssn"
    TOO_OLD = "TooOld"
    NO_KEYWORD = "KeywordMissing"
    DUPLICATE_KEY = "DuplicateKey"


@dataclass(frozen=True)
class RawRecord:
    """One pre-validation abstract record; only the key is guaranteed."""

    key: str
    title: str = ""
    abstract: str = ""
    issn: str = ""
    year: int = 0
    keywords: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.key:
            raise ValueError("record key must be non-empty")


@dataclass(frozen=True)
class DocumentRecord:
    """A cleaned, filter-passing abstract; the unit of ingestion and citation."""

    key: str
    title: str
    abstract: str
    year: int
    issn: str

    @property
    def text(self) -> str:
        return f"{self.title}. {self.abstract}" if self.title else self.abstract


@dataclass(frozen=True)
class Rejection:
    key: str
    reason: RejectReason


@dataclass
class CorpusFilterConfig:
    """Thresholds and predicates applied by :func:`filter_record`."""

    min_abstract_chars: int = 20
    min_year: int = 2020
    required_keyword_patterns: tuple[str, ...] = ("dementia", "alzheimer")
    require_issn: bool = True
    validate_issn_checksum: bool = False
    keyword_fields: tuple[str, ...] = ("title", "abstract")
    header_labels: tuple[str, ...] = DEFAULT_HEADER_LABELS

    def __post_init__(self):
        if self.min_abstract_chars < 0:
            raise ValueError("min_abstract_chars must be >= 0")
        if not self.required_keyword_patterns:
            raise ValueError("required_keyword_patterns must be non-empty")


def clean_text(raw: str, header_labels: Sequence[str] = DEFAULT_HEADER_LABELS) -> str:
    """Normalize free text: strip tags, lowercase, strip headers, collapse spaces.

    Total and idempotent: any input (including empty) yields a string that the
    function maps to itself.
    """
    text = raw
    # Tag stripping iterates to a fixpoint so nested/overlapping fragments
    # cannot leave a well-formed tag behind.
    while _TAG_RE.search(text):
        text = _TAG_RE.sub(" ", text)
    text = text.lower()
    if header_labels:
        header_re = re.compile(r"^\s*(?:%s)\s*:\s*" % "|".join(re.escape(h) for h in header_labels))
        while header_re.match(text):
            text = header_re.sub("", text, count=1)
    return _WS_RE.sub(" ", text).strip()


def valid_issn(issn: str, check_digit: bool = False) -> bool:
    """True when ``issn`` matches NNNN-NNNC (C a digit or X).

    With ``check_digit`` the ISSN mod-11 checksum is verified as well.
    """
    candidate = issn.strip().upper()
    if not _ISSN_RE.match(candidate):
        return False
    if not check_digit:
        return True
    digits = candidate.replace("-", "")
    total = sum(int(d) * w for d, w in zip(digits[:7], range(8, 1, -1)))
    expected = (11 - total % 11) % 11
    actual = 10 if digits[7] == "X" else int(digits[7])
    return actual == expected


def filter_record(
    rec: RawRecord,
    cfg: CorpusFilterConfig | None = None,
    accepted_keys: set[str] | None = None,
) -> DocumentRecord | Rejection:
    """Clean ``rec`` and apply the configured predicates in fixed order.

    Args:
        rec: the raw record; ``rec.key`` must be non-empty.
        cfg: filter thresholds; defaults match the standard pipeline.
        accepted_keys: keys already accepted in this ingestion run. When the
            record's key is present the record is rejected as a duplicate
            before any predicate runs.

    Returns:
        A :class:`DocumentRecord` when every predicate passes, otherwise a
        :class:`Rejection` naming the first failing rule.
    """
    cfg = cfg or CorpusFilterConfig()
    if accepted_keys is not None and rec.key in accepted_keys:
        return Rejection(rec.key, RejectReason.DUPLICATE_KEY)

    title = clean_text(rec.title, cfg.header_labels)
    abstract = clean_text(rec.abstract, cfg.header_labels)

    if len(abstract) <= cfg.min_abstract_chars:
        return Rejection(rec.key, RejectReason.TOO_SHORT)
    if cfg.require_issn and not valid_issn(rec.issn, cfg.validate_issn_checksum):
        return Rejection(rec.key, RejectReason.INVALID_ISSN)
    if rec.year <= cfg.min_year:
        return Rejection(rec.key, RejectReason.TOO_OLD)

    haystacks = []
    if "title" in cfg.keyword_fields:
        haystacks.append(title)
    if "abstract" in cfg.keyword_fields:
        haystacks.append(abstract)
    if "keywords" in cfg.keyword_fields:
        haystacks.append(" ".join(k.lower() for k in rec.keywords))
    haystack = " ".join(haystacks)
    if not any(pattern.lower() in haystack for pattern in cfg.required_keyword_patterns):
        return Rejection(rec.key, RejectReason.NO_KEYWORD)

    return DocumentRecord(
        key=rec.key,
        title=title,
        abstract=abstract,
        year=rec.year,
        issn=rec.issn.strip().upper(),
    )


def _parse_year(value, line: int) -> int:
    try:
        return int(str(value).strip())
    except (TypeError, ValueError):
        raise ParseError(f"year is not an integer: {value!r}", line) from None


def _iter_record_lines(path: Path) -> Iterable[tuple[int, RawRecord]]:
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid record line ({exc.msg})", lineno) from None
            if not isinstance(payload, dict):
                raise ParseError("record line is not an object", lineno)
            missing = [f for f in _REQUIRED_FIELDS if f not in payload]
            if missing:
                raise ParseError(f"missing fields: {', '.join(missing)}", lineno)
            if not str(payload.get("key", "")):
                raise ParseError("empty key", lineno)
            yield lineno, RawRecord(
                key=str(payload["key"]),
                title=str(payload.get("title", "")),
                abstract=str(payload.get("abstract", "")),
                issn=str(payload.get("issn", "") or ""),
                year=_parse_year(payload["year"], lineno),
                keywords=tuple(payload.get("keywords", ()) or ()),
            )


def _iter_delimited(path: Path) -> Iterable[tuple[int, RawRecord]]:
    with path.open(encoding="utf-8", newline="") as fh:
        sample = fh.readline()
        if not sample:
            return
        delimiter = "\t" if "\t" in sample else ","
        fh.seek(0)
        reader = csv.DictReader(fh, delimiter=delimiter)
        missing = [f for f in _REQUIRED_FIELDS if f not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(f"missing columns: {', '.join(missing)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if row.get("key") is None or not row["key"].strip():
                raise ParseError("empty key", lineno)
            yield lineno, RawRecord(
                key=row["key"].strip(),
                title=row.get("title") or "",
                abstract=row.get("abstract") or "",
                issn=(row.get("issn") or "").strip(),
                year=_parse_year(row.get("year"), lineno),
                keywords=tuple(k.strip() for k in (row.get("keywords") or "").split(";") if k.strip()),
            )


def load_corpus(
    path: str | Path,
    fmt: str = FORMAT_RECORD_LINES,
    cfg: CorpusFilterConfig | None = None,
) -> tuple[list[DocumentRecord], list[Rejection]]:
    """Load, clean and filter a corpus file.

    Args:
        path: corpus file with fields {key, title, abstract, issn, year};
            JSON record-lines or a header-bearing delimited table.
        fmt: ``record-lines`` or ``delimited-table``.
        cfg: filter configuration.

    Returns:
        (accepted records in file order, rejection report). Accepted keys are
        pairwise distinct.

    Raises:
        ParseError: malformed file, with the offending line number.
        EmptyCorpus: zero records were accepted.
    """
    path = Path(path)
    if fmt == FORMAT_RECORD_LINES:
        rows = _iter_record_lines(path)
    elif fmt == FORMAT_DELIMITED:
        rows = _iter_delimited(path)
    else:
        raise ValueError(f"unknown corpus format: {fmt!r}")

    cfg = cfg or CorpusFilterConfig()
    accepted: list[DocumentRecord] = []
    accepted_keys: set[str] = set()
    report: list[Rejection] = []
    for _, raw in rows:
        outcome = filter_record(raw, cfg, accepted_keys)
        if isinstance(outcome, DocumentRecord):
            accepted.append(outcome)
            accepted_keys.add(outcome.key)
        else:
            report.append(outcome)
    if not accepted:
        raise EmptyCorpus(f"no records accepted from {path}")
    return accepted, report


def write_rejections(report: Sequence[Rejection], path: str | Path) -> None:
    """Write the rejection report as record-lines of {key, reason}."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for rej in report:
            fh.write(json.dumps({"key": rej.key, "reason": rej.reason.value}) + "\n")


def write_corpus(records: Sequence[DocumentRecord], path: str | Path) -> None:
    """Write cleaned records as record-lines, loadable by :func:`load_corpus`."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "key": rec.key,
                        "title": rec.title,
                        "abstract": rec.abstract,
                        "issn": rec.issn,
                        "year": rec.year,
                    }
                )
                + "\n"
            )
