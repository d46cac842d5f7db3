"""Exception types shared across the package."""

from __future__ import annotations


class MogkanError(ValueError):
    """Base error. ``kind`` is a short machine-readable tag such as ``"shape-mismatch"``."""

    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


class ParseError(MogkanError):
    """Malformed input file; carries the 1-based line (and column, when known)."""

    def __init__(self, kind: str, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(kind, where + message)
