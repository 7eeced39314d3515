from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Iterable, TextIO

from .syntax import Span

# codes
SYNTAX = "E001"
UNSUPPORTED = "E002"
MISSING_KEY = "E010"
MISSING_INIT = "E011"
DUPLICATE_CLASS = "E012"
UNTYPED_PARAM = "E020"
UNTYPED_VAR = "E021"
UNTYPED_RETURN = "E022"
UNTYPED_FIELD = "E023"
BAD_KEY = "E024"
KEY_REASSIGN = "W030"
MUTATION = "E031"
REMOTE_FIELD = "E032"
UNKNOWN_NAME = "E040"
UNKNOWN_METHOD = "E041"
ARITY = "E042"
TYPE = "E043"
UNDEFINED = "E044"
UNSUPPORTED_CALL = "E045"
UNREACHABLE = "W046"
IR = "E050"


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    span: Span | None = None

    @property
    def is_error(self) -> bool:
        return self.severity == "error"

    def __str__(self) -> str:
        where = str(self.span) if self.span is not None else "<unknown>:0:0"
        return f"{where}: {self.severity}[{self.code}]: {self.message}"


def error(code: str, message: str, span: Span | None = None) -> Diagnostic:
    return Diagnostic("error", code, message, span)


def warning(code: str, message: str, span: Span | None = None) -> Diagnostic:
    return Diagnostic("warning", code, message, span)


def has_errors(diags: Iterable[Diagnostic]) -> bool:
    return any(d.is_error for d in diags)


def report(diags: Iterable[Diagnostic], stream: TextIO | None = None) -> None:
    stream = stream if stream is not None else sys.stderr
    for d in diags:
        print(d, file=stream)


class CompileError(Exception):
    """Raised by convenience entry points when compilation produced errors."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics if d.is_error))
