"""Source → IR pipeline: parse, analyze, split, build."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .frontend import diagnostics as D
from .frontend.analysis import ClassDescriptor, analyze
from .frontend.diagnostics import CompileError, Diagnostic
from .frontend.parser import parse_program
from .ir import DataflowIR, IRError, build_dataflow
from .splitter import SplitBlock, SplitError, StateMachine, split_function


@dataclass
class CompileResult:
    ir: DataflowIR | None
    descriptors: list[ClassDescriptor] = field(default_factory=list)
    splits: dict[str, tuple[list[SplitBlock], StateMachine]] = field(default_factory=dict)
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.ir is not None and not D.has_errors(self.diagnostics)


def compile_sources(sources: list[tuple[str, str]]) -> CompileResult:
    """Compile ``(path, text)`` pairs. Never raises on user errors."""
    program, diags = parse_program(sources)
    if D.has_errors(diags):
        return CompileResult(None, diagnostics=diags)
    descriptors, more = analyze(program)
    diags = diags + more
    if D.has_errors(diags):
        return CompileResult(None, descriptors, diagnostics=diags)
    splits: dict[str, tuple[list[SplitBlock], StateMachine]] = {}
    for cls in descriptors:
        if not cls.is_stateful:
            continue
        for m in cls.methods:
            try:
                splits[m.qualname] = split_function(m, descriptors)
            except SplitError as exc:
                diags.extend(exc.diagnostics)
    if D.has_errors(diags):
        return CompileResult(None, descriptors, splits, diags)
    try:
        ir = build_dataflow(descriptors, splits)
    except IRError as exc:
        return CompileResult(None, descriptors, splits, diags + (exc.diagnostics or [D.error(D.IR, str(exc))]))
    return CompileResult(ir, descriptors, splits, diags)


def compile_files(paths: list[str | Path]) -> CompileResult:
    return compile_sources([(str(p), Path(p).read_text()) for p in paths])


def compile_text(text: str, path: str = "<string>") -> DataflowIR:
    """Compile one source text, raising :class:`CompileError` on errors."""
    result = compile_sources([(path, text)])
    if not result.ok:
        raise CompileError(result.diagnostics)
    return result.ir


def program_path(name: str) -> Path:
    """Path of a bundled example program (``shop``, ``hotel``, ...)."""
    return Path(__file__).parent / "programs" / f"{name}.sf"
