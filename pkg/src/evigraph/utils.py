"""Small shared helpers: clocks and word-token counting.

Token rule: a token is a whitespace-delimited word. Retrieval budgeting,
generation truncation and response word counts all use this single rule.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone


def token_count(text: str) -> int:
    """Number of whitespace-delimited word tokens in ``text``."""
    return len(text.split())


class Clock:
    """Wall-clock time source (UTC)."""

    def now(self) -> datetime:
        return datetime.now(timezone.utc)

    def now_iso(self) -> str:
        return self.now().isoformat(timespec="seconds")


class DeterministicClock(Clock):
    """Counter-backed clock for reproducible runs.

    Starts at a fixed epoch and advances by a fixed step on every call, so
    timestamps are identical across runs regardless of wall time.
    """

    def __init__(self, start: str = "2026-01-01T00:00:00+00:00", step_seconds: int = 1):
        self._current = datetime.fromisoformat(start)
        self._step = timedelta(seconds=step_seconds)

    def now(self) -> datetime:
        stamp = self._current
        self._current = self._current + self._step
        return stamp
