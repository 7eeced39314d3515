"""Run one generated program on the local runtime and on the oracle and diff them."""

from __future__ import annotations

from entityflow.compiler import compile_sources
from entityflow.oracle import Oracle, OracleError
from entityflow.runtime.client import InvocationError
from entityflow.runtime.local import LocalRuntime
from entityflow.values import EntityRef

from progen import generate, workload


def _subst(args, handles):
    out = []
    for a in args:
        if isinstance(a, tuple) and a and a[0] == "@h":
            out.append(handles.get((a[1], a[2]), EntityRef(a[1], a[2])))
        else:
            out.append(a)
    return out


def check_seed(seed: int, strict_reentry: bool = False, partitions: int = 1) -> list[str]:
    """Mismatch descriptions (empty list means equivalent)."""
    prog = generate(seed)
    result = compile_sources([(f"gen{seed}.sf", prog.source)])
    if not result.ok:
        return [f"compile failed: {[str(d) for d in result.diagnostics if d.is_error]}"]
    oracle = Oracle(result.descriptors)
    rt = LocalRuntime(result.ir, partitions, strict_reentry=strict_reentry)
    handles: dict = {}
    problems: list[str] = []
    for i, (cls, key, method, args) in enumerate(workload(prog, seed)):
        args = _subst(args, handles)
        try:
            expected = ("ok", oracle.invoke(cls, key, method, args))
        except OracleError as exc:
            expected = ("error", str(exc))
        try:
            got = ("ok", rt.client_invoke(cls, key, method, args))
        except InvocationError as exc:
            got = ("error", str(exc))
        if method == "__init__" and got[0] == "ok":
            handles[(cls, key)] = got[1]
        same = expected[0] == got[0] and (expected[0] == "error" or expected[1] == got[1])
        if not same:
            problems.append(f"step {i} {cls}<{key}>.{method}{args}: oracle {expected} runtime {got}")
    if oracle.snapshot() != rt.snapshot():
        problems.append(f"state differs: oracle {oracle.snapshot()} runtime {rt.snapshot()}")
    if rt.submitted != rt.replies + rt.failures:
        problems.append("reply accounting mismatch")
    if dict(rt.visits) != dict(rt.metrics.block_exec):
        problems.append(f"visit accounting mismatch {dict(rt.visits)} vs {dict(rt.metrics.block_exec)}")
    return problems
