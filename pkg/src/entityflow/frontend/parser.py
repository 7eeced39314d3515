"""Parse ``.sf`` entity sources into the typed syntax tree.

The concrete syntax is a strict subset of Python, so the stdlib tokenizer and
parser do the lexing; this module walks the resulting tree and rejects every
production outside the subset with a spanned diagnostic. Conversion keeps
going after an unsupported construct so a file reports all of them at once.
"""

from __future__ import annotations

import ast

from . import diagnostics as D
from .diagnostics import Diagnostic
from .syntax import (
    PRIMITIVES,
    Assign,
    Attribute,
    AugAssign,
    BinOp,
    BoolOp,
    Call,
    ClassDef,
    Compare,
    Const,
    ExprStmt,
    For,
    FunctionDef,
    If,
    ListExpr,
    Module,
    Name,
    Param,
    Pass,
    Return,
    SourceProgram,
    Span,
    Subscript,
    TypeRef,
    UnaryOp,
    While,
)

_BINOPS = {
    ast.Add: "+",
    ast.Sub: "-",
    ast.Mult: "*",
    ast.Div: "/",
    ast.FloorDiv: "//",
    ast.Mod: "%",
}
_CMPOPS = {
    ast.Eq: "==",
    ast.NotEq: "!=",
    ast.Lt: "<",
    ast.LtE: "<=",
    ast.Gt: ">",
    ast.GtE: ">=",
    ast.In: "in",
    ast.NotIn: "not in",
}
_UNOPS = {ast.USub: "-", ast.UAdd: "+", ast.Not: "not"}
_LIST_NAMES = {"List", "list"}


class _Unsupported(Exception):
    def __init__(self, node: ast.AST, what: str):
        self.node = node
        self.what = what


def _describe(node: ast.AST) -> str:
    return {
        ast.Lambda: "lambda",
        ast.ListComp: "comprehension",
        ast.SetComp: "comprehension",
        ast.DictComp: "comprehension",
        ast.GeneratorExp: "generator expression",
        ast.ClassDef: "nested class",
        ast.Try: "exception handling",
        ast.Raise: "exception handling",
        ast.With: "with statement",
        ast.Yield: "generator",
        ast.YieldFrom: "generator",
        ast.Dict: "dict literal",
        ast.Set: "set literal",
        ast.Tuple: "tuple",
        ast.IfExp: "conditional expression",
        ast.Break: "break",
        ast.Continue: "continue",
        ast.Global: "global",
        ast.Nonlocal: "nonlocal",
        ast.Delete: "del",
        ast.Await: "await",
        ast.AsyncFunctionDef: "async function",
        ast.Starred: "starred expression",
        ast.JoinedStr: "f-string",
    }.get(type(node), type(node).__name__)


class _Converter:
    def __init__(self, path: str):
        self.path = path
        self.diags: list[Diagnostic] = []

    def span(self, node: ast.AST) -> Span:
        return Span(self.path, getattr(node, "lineno", 0), getattr(node, "col_offset", -1) + 1)

    def unsupported(self, node: ast.AST, what: str | None = None) -> None:
        self.diags.append(D.error(D.UNSUPPORTED, f"unsupported construct: {what or _describe(node)}", self.span(node)))

    # -- module level -----------------------------------------------------

    def module(self, tree: ast.Module) -> Module:
        imports: list[str] = []
        classes: list[ClassDef] = []
        for node in tree.body:
            if isinstance(node, ast.ImportFrom) and node.module == "typing":
                imports.extend(a.name for a in node.names)
            elif isinstance(node, ast.ClassDef):
                cls = self.classdef(node)
                if cls is not None:
                    classes.append(cls)
            elif isinstance(node, ast.Expr) and isinstance(node.value, ast.Constant) and isinstance(node.value.value, str):
                continue  # module docstring
            else:
                self.unsupported(node, f"top-level {_describe(node)}")
        return Module(self.path, tuple(imports), tuple(classes), Span(self.path, 1, 1))

    def classdef(self, node: ast.ClassDef) -> ClassDef | None:
        ok = True
        if node.bases or node.keywords:
            self.unsupported(node, "inheritance")
            ok = False
        decorators: list[str] = []
        for dec in node.decorator_list:
            if isinstance(dec, ast.Name):
                decorators.append(dec.id)
            else:
                self.unsupported(dec, "decorator expression")
                ok = False
        methods: list[FunctionDef] = []
        for i, item in enumerate(node.body):
            if isinstance(item, ast.FunctionDef):
                fn = self.function(item)
                if fn is not None:
                    methods.append(fn)
            elif isinstance(item, ast.Pass):
                continue
            elif i == 0 and isinstance(item, ast.Expr) and isinstance(item.value, ast.Constant) and isinstance(item.value.value, str):
                continue
            else:
                self.unsupported(item, f"class-level {_describe(item)}")
                ok = False
        if not ok:
            return None
        return ClassDef(node.name, tuple(decorators), tuple(methods), self.span(node))

    def function(self, node: ast.FunctionDef) -> FunctionDef | None:
        try:
            if node.decorator_list:
                raise _Unsupported(node.decorator_list[0], "method decorator")
            a = node.args
            if a.vararg or a.kwarg or a.kwonlyargs or a.defaults or a.posonlyargs or a.kw_defaults:
                raise _Unsupported(node, "default, variadic or keyword-only parameters")
            if not a.args or a.args[0].arg != "self":
                raise _Unsupported(node, "method without self parameter")
            params = tuple(
                Param(p.arg, self.annotation(p.annotation) if p.annotation is not None else None, self.span(p))
                for p in a.args[1:]
            )
            returns = self.annotation(node.returns) if node.returns is not None else None
        except _Unsupported as exc:
            self.unsupported(exc.node, exc.what)
            return None
        body = self.body(node.body, docstrings=True)
        return FunctionDef(node.name, params, returns, body, self.span(node))

    # -- annotations -------------------------------------------------------

    def annotation(self, node: ast.expr) -> TypeRef:
        if isinstance(node, ast.Constant) and node.value is None:
            return PRIMITIVES["None"]
        if isinstance(node, ast.Constant) and isinstance(node.value, str):
            try:
                inner = ast.parse(node.value, mode="eval").body
            except SyntaxError:
                raise _Unsupported(node, "malformed type annotation") from None
            return self.annotation(inner)
        if isinstance(node, ast.Name):
            if node.id in _LIST_NAMES:
                raise _Unsupported(node, "bare List annotation without element type")
            return PRIMITIVES.get(node.id, TypeRef(node.id))
        if isinstance(node, ast.Subscript) and isinstance(node.value, ast.Name) and node.value.id in _LIST_NAMES:
            return TypeRef("List", (self.annotation(node.slice),))
        raise _Unsupported(node, "type annotation")

    # -- statements --------------------------------------------------------

    def body(self, nodes: list[ast.stmt], docstrings: bool = False) -> tuple:
        out = []
        for i, node in enumerate(nodes):
            if docstrings and i == 0 and isinstance(node, ast.Expr) and isinstance(node.value, ast.Constant) and isinstance(node.value.value, str):
                continue
            try:
                stmt = self.stmt(node)
            except _Unsupported as exc:
                self.unsupported(exc.node, exc.what)
                continue
            if stmt is not None:
                out.append(stmt)
        return tuple(out)

    def stmt(self, node: ast.stmt):
        sp = self.span(node)
        if isinstance(node, ast.Assign):
            if len(node.targets) != 1:
                raise _Unsupported(node, "chained assignment")
            return Assign(self.target(node.targets[0]), self.expr(node.value), None, sp)
        if isinstance(node, ast.AnnAssign):
            if node.value is None:
                raise _Unsupported(node, "declaration without value")
            return Assign(self.target(node.target), self.expr(node.value), self.annotation(node.annotation), sp)
        if isinstance(node, ast.AugAssign):
            op = _BINOPS.get(type(node.op))
            if op is None:
                raise _Unsupported(node, "augmented operator")
            return AugAssign(self.target(node.target), op, self.expr(node.value), sp)
        if isinstance(node, ast.If):
            # elif arrives from the stdlib parser already nested in orelse
            return If(self.expr(node.test), self.body(node.body), self.body(node.orelse), sp)
        if isinstance(node, ast.For):
            if node.orelse:
                raise _Unsupported(node, "for-else")
            if not isinstance(node.target, ast.Name):
                raise _Unsupported(node.target, "loop target other than a name")
            return For(node.target.id, self.expr(node.iter), self.body(node.body), sp)
        if isinstance(node, ast.While):
            if node.orelse:
                raise _Unsupported(node, "while-else")
            return While(self.expr(node.test), self.body(node.body), sp)
        if isinstance(node, ast.Return):
            return Return(self.expr(node.value) if node.value is not None else None, sp)
        if isinstance(node, ast.Expr):
            return ExprStmt(self.expr(node.value), sp)
        if isinstance(node, ast.Pass):
            return Pass(sp)
        raise _Unsupported(node, _describe(node))

    def target(self, node: ast.expr):
        if isinstance(node, ast.Name):
            return Name(node.id, self.span(node))
        if isinstance(node, ast.Attribute):
            return Attribute(self.expr(node.value), node.attr, self.span(node))
        raise _Unsupported(node, f"assignment target {_describe(node)}")

    # -- expressions -------------------------------------------------------

    def expr(self, node: ast.expr):
        sp = self.span(node)
        if isinstance(node, ast.Constant):
            v = node.value
            if isinstance(v, (bool, int, float, str)):
                return Const(v, sp)
            raise _Unsupported(node, f"literal {type(v).__name__}")
        if isinstance(node, ast.Name):
            return Name(node.id, sp)
        if isinstance(node, ast.List):
            return ListExpr(tuple(self.expr(e) for e in node.elts), sp)
        if isinstance(node, ast.Attribute):
            return Attribute(self.expr(node.value), node.attr, sp)
        if isinstance(node, ast.Subscript):
            if isinstance(node.slice, ast.Slice):
                raise _Unsupported(node, "slice")
            return Subscript(self.expr(node.value), self.expr(node.slice), sp)
        if isinstance(node, ast.BinOp):
            op = _BINOPS.get(type(node.op))
            if op is None:
                raise _Unsupported(node, f"operator {type(node.op).__name__}")
            return BinOp(self.expr(node.left), op, self.expr(node.right), sp)
        if isinstance(node, ast.UnaryOp):
            op = _UNOPS.get(type(node.op))
            if op is None:
                raise _Unsupported(node, f"operator {type(node.op).__name__}")
            return UnaryOp(op, self.expr(node.operand), sp)
        if isinstance(node, ast.BoolOp):
            return BoolOp("and" if isinstance(node.op, ast.And) else "or", tuple(self.expr(v) for v in node.values), sp)
        if isinstance(node, ast.Compare):
            if len(node.ops) != 1:
                raise _Unsupported(node, "chained comparison")
            op = _CMPOPS.get(type(node.ops[0]))
            if op is None:
                raise _Unsupported(node, f"comparison {type(node.ops[0]).__name__}")
            return Compare(self.expr(node.left), op, self.expr(node.comparators[0]), sp)
        if isinstance(node, ast.Call):
            if node.keywords:
                raise _Unsupported(node, "keyword arguments")
            if not isinstance(node.func, (ast.Name, ast.Attribute)):
                raise _Unsupported(node, "call of computed expression")
            return Call(self.expr(node.func), tuple(self.expr(a) for a in node.args), span=sp)
        raise _Unsupported(node, _describe(node))


def parse_file(path: str, text: str) -> tuple[Module | None, list[Diagnostic]]:
    try:
        tree = ast.parse(text, filename=path)
    except SyntaxError as exc:
        kind = "lexical error" if isinstance(exc, (IndentationError, TabError)) or "token" in (exc.msg or "") else "syntax error"
        span = Span(path, exc.lineno or 0, exc.offset or 0)
        return None, [D.error(D.SYNTAX, f"{kind}: {exc.msg}", span)]
    conv = _Converter(path)
    module = conv.module(tree)
    return module, conv.diags


def parse_program(sources: list[tuple[str, str]]) -> tuple[SourceProgram, list[Diagnostic]]:
    """Parse every ``(path, text)`` pair.

    Returns the forest together with all diagnostics; files that fail to
    tokenize contribute no module. Callers treat any error diagnostic as a
    failed parse.
    """
    modules: list[Module] = []
    diags: list[Diagnostic] = []
    for path, text in sources:
        module, file_diags = parse_file(path, text)
        diags.extend(file_diags)
        if module is not None:
            modules.append(module)
    return SourceProgram(tuple((p, t) for p, t in sources), tuple(modules)), diags
