"""Automated abstract screening: batching, dual classification, key-joined results.

Batches are drawn in stable key order, skipping anything already screened, so
reruns never reclassify a paper. PICOS and measurement classification are
independent calls whose results join on document key; a missing side of the
join is an error, never a silent drop. Batch commits to the results store are
atomic.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import DocumentRecord
from .errors import EngineError
from .providers import GenerationRequest, Provider
from .utils import Clock

PICOS_VERDICTS = ("INCLUDE", "EXCLUDE", "UNCERTAIN")
MEASUREMENT_CATEGORIES = (
    "subjective_scales",
    "objective_only",
    "mixed_methods",
    "survey_only",
    "insufficient_information",
)


class ClassificationParseError(EngineError):
    """Classifier answered outside the closed output format."""

    code = "CLASSIFICATION_PARSE_ERROR"


class KeyMismatch(EngineError):
    """The two classifier batches do not cover the same keys."""

    code = "KEY_MISMATCH"

    def __init__(self, keys: Sequence[str]):
        super().__init__(f"keys present in only one batch: {', '.join(sorted(keys))}")
        self.keys = sorted(keys)


@dataclass
class ScreeningConfig:
    batch_size: int = 15

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class PicosDecision:
    verdict: str
    rationale: str

    def __post_init__(self):
        if self.verdict not in PICOS_VERDICTS:
            raise ValueError(f"unknown verdict: {self.verdict}")
        if not self.rationale:
            raise ValueError("rationale must be non-empty")


@dataclass(frozen=True)
class MeasurementClass:
    category: str
    instruments: tuple[str, ...] = ()

    def __post_init__(self):
        if self.category not in MEASUREMENT_CATEGORIES:
            raise ValueError(f"unknown category: {self.category}")


@dataclass(frozen=True)
class ScreeningRecord:
    key: str
    picos: PicosDecision
    measurement: MeasurementClass
    processed_at: str

    def content(self) -> tuple:
        """Classification content, timestamp excluded (for order-invariance checks)."""
        return (self.key, self.picos, self.measurement)


class ResultsStore:
    """Keyed screening results; one record per key, batch commits atomic."""

    def __init__(self):
        self._records: dict[str, ScreeningRecord] = {}

    def __len__(self) -> int:
        return len(self._records)

    def keys(self) -> set[str]:
        return set(self._records)

    def records(self) -> list[ScreeningRecord]:
        return [self._records[k] for k in sorted(self._records)]

    def get(self, key: str) -> ScreeningRecord | None:
        return self._records.get(key)

    def add_batch(self, batch: Sequence[ScreeningRecord]) -> None:
        duplicates = [r.key for r in batch if r.key in self._records]
        batch_keys = [r.key for r in batch]
        if len(set(batch_keys)) != len(batch_keys):
            duplicates.extend(k for k in batch_keys if batch_keys.count(k) > 1)
        if duplicates:
            raise KeyMismatch(sorted(set(duplicates)))
        for record in batch:
            self._records[record.key] = record

    def partitions(self) -> dict[str, list[ScreeningRecord]]:
        out: dict[str, list[ScreeningRecord]] = {v: [] for v in PICOS_VERDICTS}
        for record in self.records():
            out[record.picos.verdict].append(record)
        return out

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["key", "picos_verdict", "picos_rationale", "measurement_category", "instruments", "processed_at"]
            )
            for record in self.records():
                writer.writerow(
                    [
                        record.key,
                        record.picos.verdict,
                        record.picos.rationale,
                        record.measurement.category,
                        ";".join(record.measurement.instruments),
                        record.processed_at,
                    ]
                )

    @classmethod
    def load(cls, path: str | Path) -> "ResultsStore":
        store = cls()
        with Path(path).open(encoding="utf-8", newline="") as fh:
            rows = []
            for row in csv.DictReader(fh):
                rows.append(
                    ScreeningRecord(
                        key=row["key"],
                        picos=PicosDecision(row["picos_verdict"], row["picos_rationale"]),
                        measurement=MeasurementClass(
                            row["measurement_category"],
                            tuple(i for i in row["instruments"].split(";") if i),
                        ),
                        processed_at=row["processed_at"],
                    )
                )
        store.add_batch(rows)
        return store


def next_batch(
    corpus: Sequence[DocumentRecord],
    results: ResultsStore,
    cfg: ScreeningConfig | None = None,
) -> list[DocumentRecord]:
    """Up to ``batch_size`` unscreened records in stable key order."""
    cfg = cfg or ScreeningConfig()
    done = results.keys()
    pending = sorted((r for r in corpus if r.key not in done), key=lambda r: r.key)
    return pending[: cfg.batch_size]


_PICOS_RE = re.compile(r"VERDICT:\s*(\S+);\s*RATIONALE:\s*(.+)", re.IGNORECASE)
_MEASUREMENT_RE = re.compile(r"CATEGORY:\s*(\S+?);\s*INSTRUMENTS:\s*(.*)", re.IGNORECASE)


def classify_picos(rec: DocumentRecord, provider: Provider) -> PicosDecision:
    """PICOS screening verdict for one cleaned record."""
    response = provider.generate(
        GenerationRequest("classify_picos", {"title": rec.title, "abstract": rec.abstract})
    )
    m = _PICOS_RE.search(response.text)
    if not m:
        raise ClassificationParseError(f"unparseable picos output: {response.text[:80]!r}")
    verdict, rationale = m.group(1).upper(), m.group(2).strip()
    if verdict not in PICOS_VERDICTS or not rationale:
        raise ClassificationParseError(f"verdict outside closed set: {verdict!r}")
    return PicosDecision(verdict=verdict, rationale=rationale)


def classify_measurement(rec: DocumentRecord, provider: Provider) -> MeasurementClass:
    """Outcome-measurement category for one cleaned record."""
    response = provider.generate(
        GenerationRequest(
            "classify_measurement", {"title": rec.title, "abstract": rec.abstract}
        )
    )
    m = _MEASUREMENT_RE.search(response.text)
    if not m:
        raise ClassificationParseError(
            f"unparseable measurement output: {response.text[:80]!r}"
        )
    category = m.group(1).lower()
    if category not in MEASUREMENT_CATEGORIES:
        raise ClassificationParseError(f"category outside closed set: {category!r}")
    instruments = tuple(sorted(i.strip() for i in m.group(2).split(",") if i.strip()))
    return MeasurementClass(category=category, instruments=instruments)


def merge_results(
    picos_batch: Sequence[tuple[str, PicosDecision]],
    measurement_batch: Sequence[tuple[str, MeasurementClass]],
    clock: Clock | None = None,
) -> list[ScreeningRecord]:
    """Inner-join the two classifier outputs on document key.

    Keys present on only one side raise :class:`KeyMismatch` listing the
    offenders; nothing is silently dropped.
    """
    clock = clock or Clock()
    picos = dict(picos_batch)
    measurement = dict(measurement_batch)
    mismatch = set(picos) ^ set(measurement)
    if mismatch:
        raise KeyMismatch(sorted(mismatch))
    return [
        ScreeningRecord(
            key=key,
            picos=picos[key],
            measurement=measurement[key],
            processed_at=clock.now_iso(),
        )
        for key in sorted(picos)
    ]


@dataclass
class ScreeningStats:
    batches: int = 0
    processed: int = 0


def run_screening(
    corpus: Sequence[DocumentRecord],
    results: ResultsStore,
    provider: Provider,
    cfg: ScreeningConfig | None = None,
    clock: Clock | None = None,
) -> ScreeningStats:
    """Drain the corpus through batched dual classification into ``results``."""
    cfg = cfg or ScreeningConfig()
    stats = ScreeningStats()
    while True:
        batch = next_batch(corpus, results, cfg)
        if not batch:
            return stats
        picos_batch = [(rec.key, classify_picos(rec, provider)) for rec in batch]
        measurement_batch = [(rec.key, classify_measurement(rec, provider)) for rec in batch]
        results.add_batch(merge_results(picos_batch, measurement_batch, clock))
        stats.batches += 1
        stats.processed += len(batch)
