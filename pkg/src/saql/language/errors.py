"""Diagnostics raised by the parser and validator."""

from __future__ import annotations

from typing import Optional, Sequence


class QueryError(Exception):
    """Base of all query compilation failures; always positioned."""

    line: int
    col: int

    def location(self) -> str:
        return f"{self.line}:{self.col}"


class SaqlSyntaxError(QueryError):
    def __init__(self, line: int, col: int, expected: Sequence[str], found: str):
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        self.found = found
        want = " or ".join(self.expected)
        super().__init__(f"{line}:{col}: expected {want}, found {found}")


class ValidationError(QueryError):
    def __init__(self, message: str, span=None):
        self.span = span
        self.line = span.line if span is not None else 1
        self.col = span.col if span is not None else 1
        super().__init__(f"{self.line}:{self.col}: {message}")
        self.reason = message
