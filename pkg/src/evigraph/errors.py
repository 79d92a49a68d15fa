"""Base error type shared across the engine.

Every error carries a stable machine-readable ``code`` so the service layer
can map failures to wire-level error payloads without leaking stack traces.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""

    code = "ENGINE_ERROR"
    http_status = 400

    def __init__(self, message: str = "", **context):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.context = context
