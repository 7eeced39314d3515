"""Seeded generator of small random entity programs (oracle-equivalence tests).

Bounds follow the spec's small universe: ≤3 classes, ≤4 methods per class,
≤3 remote call sites per program, lists of length ≤4, ints drawn from 0..7.

Classes ``C0..Cn-1`` are stateful; ``Ci`` may only call classes with a larger
index, so the remote call graph is acyclic and every invocation terminates.
Every public method of ``Ci`` has the signature ``(self, x: int, h<j>: Cj for
j > i) -> int`` so callers can pass the handles their callees need.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field


@dataclass
class Program:
    source: str
    classes: list[str]
    methods: dict[str, list[str]]  # class -> public methods
    handle_params: dict[str, list[int]]  # class -> indices of handle params
    remote_sites: int = 0


@dataclass
class _Ctx:
    cls: int
    ncls: int
    methods: dict[int, list[str]]
    has_helper: dict[int, bool]
    remote_ok: bool
    depth: int = 0
    in_while: bool = False
    has_handles: bool = True
    lines: list[str] = field(default_factory=list)


class ProgramGenerator:
    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.calls_left = 0

    # -- expressions ---------------------------------------------------------

    def atom(self, c: _Ctx) -> str:
        r = self.rng
        choices = [
            lambda: str(r.randrange(8)),
            lambda: "x",
            lambda: f"v{r.randrange(3)}",
            lambda: r.choice(["self.a", "self.b"]),
            lambda: "len(self.xs)",
        ]
        handles = list(range(c.cls + 1, c.ncls)) if c.has_handles else []
        if handles:
            choices.append(lambda: f"h{r.choice(handles)}.k")
        return r.choice(choices)()

    def int_expr(self, c: _Ctx, depth: int = 0, allow_remote: bool = True) -> str:
        r = self.rng
        if allow_remote and c.remote_ok and self.calls_left > 0 and r.random() < 0.25:
            return self.remote_call(c)
        if depth >= 2 or r.random() < 0.4:
            return self.atom(c)
        kind = r.randrange(7)
        a = self.int_expr(c, depth + 1, allow_remote)
        b = self.int_expr(c, depth + 1, allow_remote)
        if kind == 0:
            return f"({a} + {b})"
        if kind == 1:
            return f"({a} - {b})"
        if kind == 2:
            return f"({a} * {b}) % 8"
        if kind == 3:
            return f"({a} // {b})"  # may divide by zero: exercises failure paths
        if kind == 4:
            return f"min({a}, {b})"
        if kind == 5:
            return f"abs({a})"
        if c.has_helper[c.cls]:
            return f"self.helper({a})"
        return f"({a} % 8)"

    def cond(self, c: _Ctx, depth: int = 0) -> str:
        r = self.rng
        kind = r.randrange(6)
        if kind <= 2 or depth >= 1:
            op = r.choice(["<", "<=", "==", "!=", ">", ">="])
            return f"{self.int_expr(c)} {op} {self.int_expr(c)}"
        if kind == 3:
            return f"{self.int_expr(c)} in self.xs"
        if kind == 4:
            return f"not {self.cond(c, depth + 1)}"
        op = r.choice(["and", "or"])
        return f"({self.cond(c, depth + 1)} {op} {self.cond(c, depth + 1)})"

    def remote_call(self, c: _Ctx) -> str:
        r = self.rng
        self.calls_left -= 1
        j = r.randrange(c.cls + 1, c.ncls)
        m = r.choice(c.methods[j])
        args = [self.int_expr(c, 2, allow_remote=False)] + [f"h{t}" for t in range(j + 1, c.ncls)]
        return f"h{j}.{m}({', '.join(args)})"

    # -- statements ----------------------------------------------------------

    def emit(self, c: _Ctx, text: str) -> None:
        c.lines.append("    " * (c.depth + 2) + text)

    def stmts(self, c: _Ctx, n: int) -> None:
        for _ in range(n):
            self.stmt(c)

    def stmt(self, c: _Ctx) -> None:
        r = self.rng
        kinds = ["assign", "assign", "field", "aug", "append"]
        if c.depth < 2:
            kinds += ["if", "for", "for_xs"]
            if not c.in_while:
                kinds.append("while")
        if c.depth > 0:
            kinds.append("early_return")
        kind = r.choice(kinds)
        if kind == "assign":
            self.emit(c, f"v{r.randrange(3)} = {self.int_expr(c)}")
        elif kind == "field":
            self.emit(c, f"{r.choice(['self.a', 'self.b'])} = {self.int_expr(c)}")
        elif kind == "aug":
            target = r.choice(["self.a", "self.b", "v0", "v1", "v2"])
            self.emit(c, f"{target} {r.choice(['+=', '-='])} {self.int_expr(c)}")
        elif kind == "append":
            self.emit(c, "if len(self.xs) < 4:")
            c.depth += 1
            self.emit(c, f"self.xs = self.xs + [{self.int_expr(c)} % 8]")
            c.depth -= 1
        elif kind == "early_return":
            self.emit(c, f"if {self.cond(c)}:")
            c.depth += 1
            self.emit(c, f"return {self.int_expr(c)}")
            c.depth -= 1
        elif kind == "if":
            self.emit(c, f"if {self.cond(c)}:")
            c.depth += 1
            self.stmts(c, r.randint(1, 2))
            c.depth -= 1
            if r.random() < 0.5:
                self.emit(c, "else:")
                c.depth += 1
                self.stmts(c, r.randint(1, 2))
                c.depth -= 1
        elif kind == "for":
            self.emit(c, f"for v{r.randrange(3)} in range({r.randint(0, 3)}):")
            c.depth += 1
            self.stmts(c, r.randint(1, 2))
            c.depth -= 1
        elif kind == "for_xs":
            self.emit(c, f"for v{r.randrange(3)} in self.xs:")
            c.depth += 1
            self.stmts(c, r.randint(1, 2))
            c.depth -= 1
        else:
            self.emit(c, "w = 0")
            test = f"w < {r.randint(0, 3)}"
            if r.random() < 0.4:
                test = f"{test} and {self.cond(c, 1)}"
            self.emit(c, f"while {test}:")
            c.depth += 1
            c.in_while = True
            self.stmts(c, r.randint(1, 2))
            self.emit(c, "w += 1")
            c.in_while = False
            c.depth -= 1

    # -- program -------------------------------------------------------------

    def generate(self) -> Program:
        r = self.rng
        ncls = r.choice((1, 2, 2, 3, 3, 3))
        self.calls_left = r.randint(0, 3) if ncls > 1 else 0
        total_calls = self.calls_left
        nested = ncls == 3 and r.random() < 0.5
        if nested:  # two of the call sites are reserved for a caller → split callee chain
            total_calls = max(total_calls, 2)
            self.calls_left = total_calls - 2
        methods = {i: [f"m{k}" for k in range(r.randint(1, 3))] for i in range(ncls)}
        has_helper = {i: r.random() < 0.4 for i in range(ncls)}
        lines = ["from typing import List", ""]
        # later classes first so a method body can only call already-known names (not required, just tidy)
        for i in reversed(range(ncls)):
            handles = list(range(i + 1, ncls))
            params = "".join(f", h{j}: C{j}" for j in handles)
            lines += ["", "@stateflow", f"class C{i}:", ""]
            lines += [
                "    def __init__(self, k: int):",
                "        self.k: int = k",
                f"        self.a: int = {r.randrange(8)}",
                "        self.b: int = k",
                "        self.xs: List[int] = []",
                "",
                "    def __key__(self):",
                "        return self.k",
                "",
            ]
            if has_helper[i]:
                c = _Ctx(i, ncls, methods, {**has_helper, i: False}, remote_ok=False, has_handles=False)
                c.lines.append("    def helper(self, x: int) -> int:")
                self._prologue(c)
                self.stmts(c, r.randint(0, 2))
                self.emit(c, f"return {self.int_expr(c, allow_remote=False)}")
                lines += c.lines + [""]
            for m in methods[i]:
                c = _Ctx(i, ncls, methods, has_helper, remote_ok=bool(handles))
                c.lines.append(f"    def {m}(self, x: int{params}) -> int:")
                self._prologue(c)
                if nested and i == 1 and m == "m0":
                    # a callee that itself calls out ...
                    self.emit(c, f"v1 = v1 + h2.{r.choice(methods[2])}(v0)")
                if nested and i == 0 and m == "m0":
                    # ... and a caller of it: exercises nested machines
                    self.emit(c, "v1 = v1 + h1.m0(v2, h2)")
                self.stmts(c, r.randint(1, 4))
                self.emit(c, f"return {self.int_expr(c)}")
                lines += c.lines + [""]
        return Program(
            source="\n".join(lines) + "\n",
            classes=[f"C{i}" for i in range(ncls)],
            methods={f"C{i}": methods[i] for i in range(ncls)},
            handle_params={f"C{i}": list(range(i + 1, ncls)) for i in range(ncls)},
            remote_sites=total_calls - self.calls_left,
        )

    def _prologue(self, c: _Ctx) -> None:
        self.emit(c, "v0 = x")
        self.emit(c, f"v1 = {self.rng.randrange(8)}")
        self.emit(c, "v2 = self.a")
        self.emit(c, "w = 0")


def generate(seed: int) -> Program:
    return ProgramGenerator(seed).generate()


def workload(program: Program, seed: int, invocations: int = 8) -> list[tuple[str, int, str, list]]:
    """Client script: create two entities per class, then random invocations.

    Handle arguments are given as ``("@h", class, key)`` placeholders that the
    test substitutes with real handles.
    """
    r = random.Random(seed)
    script: list[tuple[str, int, str, list]] = []
    for cls in reversed(program.classes):
        for key in range(2):
            script.append((cls, key, "__init__", [key]))
    for _ in range(invocations):
        cls = r.choice(program.classes)
        key = r.randrange(3)  # key 2 never exists: exercises "entity not found"
        method = r.choice(program.methods[cls])
        args: list = [r.randrange(8)] + [("@h", f"C{j}", r.randrange(2)) for j in program.handle_params[cls]]
        script.append((cls, key, method, args))
    return script
