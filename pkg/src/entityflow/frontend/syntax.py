"""Typed syntax tree for entity programs.

Nodes are frozen dataclasses. Source spans ride along on every node but are
excluded from equality, so two trees parsed from differently formatted text
compare equal when their structure matches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union


@dataclass(frozen=True)
class Span:
    file: str
    line: int  # 1-based
    col: int  # 1-based

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


def _span() -> Span | None:
    return field(default=None, compare=False, repr=False)


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class TypeRef:
    """A resolved or declared type: a primitive, ``List[T]`` or a class name."""

    name: str
    args: tuple[TypeRef, ...] = ()

    def __str__(self) -> str:
        if self.args:
            return f"{self.name}[{', '.join(map(str, self.args))}]"
        return self.name

    @property
    def is_list(self) -> bool:
        return self.name == "List"

    @property
    def elem(self) -> TypeRef:
        return self.args[0]

    @property
    def is_numeric(self) -> bool:
        return self.name in ("int", "float")


INT = TypeRef("int")
FLOAT = TypeRef("float")
STR = TypeRef("str")
BOOL = TypeRef("bool")
NONE = TypeRef("None")
PRIMITIVES = {"int": INT, "float": FLOAT, "str": STR, "bool": BOOL, "None": NONE}


def list_of(elem: TypeRef) -> TypeRef:
    return TypeRef("List", (elem,))


# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class Const:
    value: Union[int, float, str, bool]
    span: Span | None = _span()


@dataclass(frozen=True)
class ListExpr:
    elts: tuple[Expr, ...]
    span: Span | None = _span()


@dataclass(frozen=True)
class Name:
    id: str
    span: Span | None = _span()


@dataclass(frozen=True)
class Attribute:
    value: Expr
    attr: str
    span: Span | None = _span()


@dataclass(frozen=True)
class Subscript:
    value: Expr
    index: Expr
    span: Span | None = _span()


@dataclass(frozen=True)
class BinOp:
    left: Expr
    op: str
    right: Expr
    span: Span | None = _span()


@dataclass(frozen=True)
class UnaryOp:
    op: str  # "-", "+", "not"
    operand: Expr
    span: Span | None = _span()


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" | "or"
    values: tuple[Expr, ...]
    span: Span | None = _span()


@dataclass(frozen=True)
class Compare:
    left: Expr
    op: str
    right: Expr
    span: Span | None = _span()


@dataclass(frozen=True)
class Call:
    """Call expression.

    ``func`` is a :class:`Name` (builtin or constructor) or an
    :class:`Attribute` (method call). ``kind`` and ``target`` stay empty until
    remote-reference resolution fills them: kind is one of ``remote``,
    ``self``, ``value``, ``builtin`` or ``construct``; target is the class
    that owns the called code.
    """

    func: Expr
    args: tuple[Expr, ...]
    kind: str = field(default="", compare=False)
    target: str = field(default="", compare=False)
    span: Span | None = _span()


Expr = Union[Const, ListExpr, Name, Attribute, Subscript, BinOp, UnaryOp, BoolOp, Compare, Call]


# ---------------------------------------------------------------------------
# statements


@dataclass(frozen=True)
class Assign:
    target: Expr  # Name or Attribute(self, field)
    value: Expr
    annotation: TypeRef | None = None
    span: Span | None = _span()


@dataclass(frozen=True)
class AugAssign:
    target: Expr
    op: str
    value: Expr
    span: Span | None = _span()


@dataclass(frozen=True)
class If:
    test: Expr
    body: tuple[Stmt, ...]
    orelse: tuple[Stmt, ...] = ()
    span: Span | None = _span()


@dataclass(frozen=True)
class For:
    target: str
    iter: Expr
    body: tuple[Stmt, ...]
    span: Span | None = _span()


@dataclass(frozen=True)
class While:
    test: Expr
    body: tuple[Stmt, ...]
    span: Span | None = _span()


@dataclass(frozen=True)
class Return:
    value: Expr | None = None
    span: Span | None = _span()


@dataclass(frozen=True)
class ExprStmt:
    value: Expr
    span: Span | None = _span()


@dataclass(frozen=True)
class Pass:
    span: Span | None = _span()


@dataclass(frozen=True)
class CallRemote:
    """``result = receiver.method(*args)`` where the receiver is a remote entity.

    Never produced by the parser; the splitter hoists every remote call into
    one of these before cutting the method into blocks.
    """

    result: str
    receiver: Expr
    class_name: str
    method: str
    args: tuple[Expr, ...]
    span: Span | None = _span()


Stmt = Union[Assign, AugAssign, If, For, While, Return, ExprStmt, Pass, CallRemote]


# ---------------------------------------------------------------------------
# declarations


@dataclass(frozen=True)
class Param:
    name: str
    annotation: TypeRef | None
    span: Span | None = _span()


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: tuple[Param, ...]  # excludes self
    returns: TypeRef | None
    body: tuple[Stmt, ...]
    span: Span | None = _span()


@dataclass(frozen=True)
class ClassDef:
    name: str
    decorators: tuple[str, ...]
    methods: tuple[FunctionDef, ...]
    span: Span | None = _span()

    @property
    def is_stateful(self) -> bool:
        return "stateflow" in self.decorators


@dataclass(frozen=True)
class Module:
    path: str
    imports: tuple[str, ...]  # names pulled from ``typing``
    classes: tuple[ClassDef, ...]
    span: Span | None = _span()


@dataclass(frozen=True)
class SourceProgram:
    files: tuple[tuple[str, str], ...]
    modules: tuple[Module, ...]

    @property
    def classes(self) -> list[ClassDef]:
        return [c for m in self.modules for c in m.classes]


# ---------------------------------------------------------------------------
# traversal helpers


def iter_exprs(expr: Expr) -> Iterator[Expr]:
    """Pre-order walk over an expression and its subexpressions."""
    yield expr
    if isinstance(expr, ListExpr):
        for e in expr.elts:
            yield from iter_exprs(e)
    elif isinstance(expr, Attribute):
        yield from iter_exprs(expr.value)
    elif isinstance(expr, Subscript):
        yield from iter_exprs(expr.value)
        yield from iter_exprs(expr.index)
    elif isinstance(expr, (BinOp, Compare)):
        yield from iter_exprs(expr.left)
        yield from iter_exprs(expr.right)
    elif isinstance(expr, UnaryOp):
        yield from iter_exprs(expr.operand)
    elif isinstance(expr, BoolOp):
        for e in expr.values:
            yield from iter_exprs(e)
    elif isinstance(expr, Call):
        yield from iter_exprs(expr.func)
        for e in expr.args:
            yield from iter_exprs(e)


def stmt_exprs(stmt: Stmt) -> list[Expr]:
    """Expressions directly owned by a statement (not by nested statements)."""
    if isinstance(stmt, (Assign, AugAssign)):
        return [stmt.target, stmt.value]
    if isinstance(stmt, (If, While)):
        return [stmt.test]
    if isinstance(stmt, For):
        return [stmt.iter]
    if isinstance(stmt, Return):
        return [stmt.value] if stmt.value is not None else []
    if isinstance(stmt, ExprStmt):
        return [stmt.value]
    if isinstance(stmt, CallRemote):
        return [stmt.receiver, *stmt.args]
    return []


def iter_stmts(body: tuple[Stmt, ...]) -> Iterator[Stmt]:
    for stmt in body:
        yield stmt
        if isinstance(stmt, If):
            yield from iter_stmts(stmt.body)
            yield from iter_stmts(stmt.orelse)
        elif isinstance(stmt, (For, While)):
            yield from iter_stmts(stmt.body)


def names_in(body: tuple[Stmt, ...]) -> set[str]:
    """Every identifier spelled anywhere in ``body``."""
    out: set[str] = set()
    for stmt in iter_stmts(body):
        if isinstance(stmt, For):
            out.add(stmt.target)
        if isinstance(stmt, CallRemote):
            out.add(stmt.result)
        for e in stmt_exprs(stmt):
            for sub in iter_exprs(e):
                if isinstance(sub, Name):
                    out.add(sub.id)
    return out


def is_self_attr(expr: Expr) -> bool:
    return isinstance(expr, Attribute) and isinstance(expr.value, Name) and expr.value.id == "self"


# ---------------------------------------------------------------------------
# pretty printing

_PREC = {"or": 1, "and": 2, "not": 3, "cmp": 4, "+": 6, "-": 6, "*": 7, "/": 7, "//": 7, "%": 7, "neg": 8}


def format_expr(expr: Expr) -> str:
    return _fmt(expr, 0)


def _fmt(expr: Expr, ctx: int) -> str:
    if isinstance(expr, Const):
        return repr(expr.value)
    if isinstance(expr, Name):
        return expr.id
    if isinstance(expr, ListExpr):
        return "[" + ", ".join(_fmt(e, 0) for e in expr.elts) + "]"
    if isinstance(expr, Attribute):
        return f"{_fmt(expr.value, 10)}.{expr.attr}"
    if isinstance(expr, Subscript):
        return f"{_fmt(expr.value, 10)}[{_fmt(expr.index, 0)}]"
    if isinstance(expr, Call):
        return f"{_fmt(expr.func, 10)}({', '.join(_fmt(a, 0) for a in expr.args)})"
    if isinstance(expr, BinOp):
        p = _PREC[expr.op]
        text = f"{_fmt(expr.left, p)} {expr.op} {_fmt(expr.right, p + 1)}"
    elif isinstance(expr, Compare):
        p = _PREC["cmp"]
        text = f"{_fmt(expr.left, p + 1)} {expr.op} {_fmt(expr.right, p + 1)}"
    elif isinstance(expr, UnaryOp):
        if expr.op == "not":
            p = _PREC["not"]
            text = f"not {_fmt(expr.operand, p)}"
        else:
            p = _PREC["neg"]
            text = f"{expr.op}{_fmt(expr.operand, p)}"
    elif isinstance(expr, BoolOp):
        p = _PREC[expr.op]
        text = f" {expr.op} ".join(_fmt(v, p + 1) for v in expr.values)
    else:  # pragma: no cover
        raise TypeError(f"not an expression: {expr!r}")
    return f"({text})" if p < ctx or (ctx >= 10) else text


def format_stmt(stmt: Stmt, indent: int = 0) -> list[str]:
    pad = "    " * indent
    if isinstance(stmt, Assign):
        ann = f": {stmt.annotation}" if stmt.annotation is not None else ""
        return [f"{pad}{format_expr(stmt.target)}{ann} = {format_expr(stmt.value)}"]
    if isinstance(stmt, AugAssign):
        return [f"{pad}{format_expr(stmt.target)} {stmt.op}= {format_expr(stmt.value)}"]
    if isinstance(stmt, Return):
        return [f"{pad}return" + ("" if stmt.value is None else f" {format_expr(stmt.value)}")]
    if isinstance(stmt, ExprStmt):
        return [f"{pad}{format_expr(stmt.value)}"]
    if isinstance(stmt, Pass):
        return [f"{pad}pass"]
    if isinstance(stmt, CallRemote):
        args = ", ".join(format_expr(a) for a in stmt.args)
        return [f"{pad}{stmt.result} = {format_expr(stmt.receiver)}.{stmt.method}({args})"]
    if isinstance(stmt, If):
        lines = [f"{pad}if {format_expr(stmt.test)}:", *format_body(stmt.body, indent + 1)]
        if stmt.orelse:
            lines.append(f"{pad}else:")
            lines.extend(format_body(stmt.orelse, indent + 1))
        return lines
    if isinstance(stmt, For):
        return [f"{pad}for {stmt.target} in {format_expr(stmt.iter)}:", *format_body(stmt.body, indent + 1)]
    if isinstance(stmt, While):
        return [f"{pad}while {format_expr(stmt.test)}:", *format_body(stmt.body, indent + 1)]
    raise TypeError(f"not a statement: {stmt!r}")


def format_body(body: tuple[Stmt, ...], indent: int) -> list[str]:
    if not body:
        return ["    " * indent + "pass"]
    return [line for s in body for line in format_stmt(s, indent)]


def format_function(fn: FunctionDef, indent: int = 1) -> list[str]:
    pad = "    " * indent
    params = ["self"] + [p.name if p.annotation is None else f"{p.name}: {p.annotation}" for p in fn.params]
    ret = f" -> {fn.returns}" if fn.returns is not None else ""
    return [f"{pad}def {fn.name}({', '.join(params)}){ret}:", *format_body(fn.body, indent + 1)]


def format_module(module: Module) -> str:
    lines: list[str] = []
    if module.imports:
        lines.append(f"from typing import {', '.join(module.imports)}")
        lines.append("")
    for cls in module.classes:
        lines.extend(f"@{d}" for d in cls.decorators)
        lines.append(f"class {cls.name}:")
        if not cls.methods:
            lines.append("    pass")
        for i, fn in enumerate(cls.methods):
            if i:
                lines.append("")
            lines.extend(format_function(fn))
        lines.append("")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
