"""Shared error types for file ingestion and dataset validation."""

from __future__ import annotations


class ParseError(ValueError):
    """A file could not be parsed; carries the path and 1-based line number."""

    def __init__(self, path: str, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class IntegrityError(ValueError):
    """Parsed data violates a structural rule (duplicates, conflicts, gaps)."""
