"""Closure compiler for block bodies and local method calls.

Every statement and expression compiles once into a Python closure taking
``(env, me)``: ``env`` holds local variables and ``me`` is the
:class:`Entity` playing ``self``. A statement closure returns ``None`` to fall
through or a 1-tuple ``(value,)`` when it executes ``return``.

Remote calls never appear here: the splitter hoists them into block
terminators, which the executor handles.
"""

from __future__ import annotations

import operator
from typing import Any, Callable

from ..frontend import syntax as X
from ..ir import ClassMeta, DataflowIR
from ..values import EntityRef, Record

ExprFn = Callable[[dict, "Entity"], Any]
StmtFn = Callable[[dict, "Entity"], "tuple | None"]

DEFAULT_STEP_LIMIT = 1_000_000


class EvalError(Exception):
    def __init__(self, message: str, span: X.Span | None = None):
        self.message = message
        self.span = span
        super().__init__(f"{span}: {message}" if span is not None else message)


class Entity:
    """``self`` during execution: class metadata plus a live field map."""

    __slots__ = ("meta", "fields", "key")

    def __init__(self, meta: ClassMeta, fields: dict[str, Any], key: Any = None):
        self.meta = meta
        self.fields = fields
        self.key = key

    def as_value(self) -> Any:
        if self.meta.stateful:
            return EntityRef(self.meta.name, self.key, {f: self.fields[f] for f in self.meta.handle_fields})
        return Record(self.meta.name, dict(self.fields))


_BINOPS = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "/": operator.truediv,
    "//": operator.floordiv,
    "%": operator.mod,
}
_CMPOPS = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "in": lambda a, b: a in b,
    "not in": lambda a, b: a not in b,
}
_UNOPS = {"-": operator.neg, "+": operator.pos, "not": operator.not_}


def _builtin_range(*args):
    return list(range(*args))


BUILTINS: dict[str, Callable] = {
    "len": len,
    "range": _builtin_range,
    "abs": abs,
    "min": min,
    "max": max,
    "str": str,
    "int": int,
    "float": float,
}

_RUNTIME_ERRORS = (ZeroDivisionError, TypeError, ValueError, IndexError, OverflowError, KeyError, AttributeError)


def get_field(obj: Any, attr: str, span: X.Span | None) -> Any:
    if isinstance(obj, Record):
        try:
            return obj.fields[attr]
        except KeyError:
            raise EvalError(f"{obj.cls} has no field {attr!r}", span) from None
    if isinstance(obj, EntityRef):
        try:
            return obj.frozen[attr]
        except KeyError:
            raise EvalError(f"field {attr!r} of {obj!r} is not readable through a handle", span) from None
    if obj is None:
        raise EvalError(f"attribute {attr!r} of None", span)
    raise EvalError(f"{type(obj).__name__} value has no attribute {attr!r}", span)


class Program:
    """Compiled view of an IR's classes; shared by all partitions of a worker."""

    def __init__(self, ir: DataflowIR, step_limit: int = DEFAULT_STEP_LIMIT):
        self.ir = ir
        self.classes = ir.classes
        self.step_limit = step_limit
        self.steps = step_limit
        self._methods: dict[tuple[str, str], StmtFn] = {}
        self._blocks: dict[int, StmtFn] = {}
        self._exprs: dict[int, ExprFn] = {}

    # -- entry points -------------------------------------------------------

    def reset_budget(self) -> None:
        self.steps = self.step_limit

    def block_fn(self, body: tuple[X.Stmt, ...]) -> StmtFn:
        """Compiled closure for a block body, cached by identity (the IR keeps it alive)."""
        fn = self._blocks.get(id(body))
        if fn is None:
            fn = self._blocks[id(body)] = self.compile_body(body)
        return fn

    def expr_fn(self, expr: X.Expr) -> ExprFn:
        fn = self._exprs.get(id(expr))
        if fn is None:
            fn = self._exprs[id(expr)] = self.compile_expr(expr)
        return fn

    def run_method(self, me: Entity, name: str, args: list[Any]) -> Any:
        meta = me.meta.method(name)
        if meta is None:
            raise EvalError(f"unknown method {me.meta.name}.{name}")
        if len(args) != len(meta.params):
            raise EvalError(f"{me.meta.name}.{name} takes {len(meta.params)} argument(s), {len(args)} given")
        key = (me.meta.name, name)
        fn = self._methods.get(key)
        if fn is None:
            fn = self._methods[key] = self.compile_body(meta.body)
        env = dict(zip(meta.param_names, args))
        out = fn(env, me)
        return out[0] if out is not None else None

    def construct(self, cls: str, args: list[Any]) -> dict[str, Any]:
        """Run ``cls.__init__`` on fresh state and return the field map."""
        meta = self.classes[cls]
        me = Entity(meta, {})
        self.run_method(me, "__init__", args)
        missing = [f for f in meta.field_names if f not in me.fields]
        if missing:
            raise EvalError(f"constructor of {cls} left fields unset: {', '.join(missing)}")
        return me.fields

    def key_of(self, cls: str, fields: dict[str, Any]) -> Any:
        meta = self.classes[cls]
        return self.run_method(Entity(meta, fields), "__key__", [])

    # -- compilation --------------------------------------------------------

    def compile_body(self, body: tuple[X.Stmt, ...]) -> StmtFn:
        fns = [self.compile_stmt(s) for s in body]
        if not fns:
            return lambda env, me: None
        if len(fns) == 1:
            return fns[0]

        def run(env, me):
            for f in fns:
                out = f(env, me)
                if out is not None:
                    return out
            return None

        return run

    def compile_stmt(self, s: X.Stmt) -> StmtFn:
        span = s.span
        if isinstance(s, X.Assign):
            return self._assign(s.target, self.compile_expr(s.value), span)
        if isinstance(s, X.AugAssign):
            binop = _BINOPS[s.op]
            get = self.compile_expr(s.target)
            val = self.compile_expr(s.value)

            def aug_value(env, me):
                try:
                    return binop(get(env, me), val(env, me))
                except _RUNTIME_ERRORS as exc:
                    raise EvalError(f"{s.op}=: {exc}", span) from None

            return self._assign(s.target, aug_value, span)
        if isinstance(s, X.ExprStmt):
            f = self.compile_expr(s.value)

            def expr_stmt(env, me):
                f(env, me)

            return expr_stmt
        if isinstance(s, X.Pass):
            return lambda env, me: None
        if isinstance(s, X.Return):
            if s.value is None:
                return lambda env, me: (None,)
            f = self.compile_expr(s.value)
            return lambda env, me: (f(env, me),)
        if isinstance(s, X.If):
            test = self.compile_expr(s.test)
            body = self.compile_body(s.body)
            orelse = self.compile_body(s.orelse)

            def if_stmt(env, me):
                return body(env, me) if test(env, me) else orelse(env, me)

            return if_stmt
        if isinstance(s, X.While):
            test = self.compile_expr(s.test)
            body = self.compile_body(s.body)

            def while_stmt(env, me):
                while test(env, me):
                    self._tick(span)
                    out = body(env, me)
                    if out is not None:
                        return out
                return None

            return while_stmt
        if isinstance(s, X.For):
            it = self.compile_expr(s.iter)
            body = self.compile_body(s.body)
            target = s.target

            def for_stmt(env, me):
                seq = it(env, me)
                if not isinstance(seq, (list, str)):
                    raise EvalError(f"cannot iterate over {type(seq).__name__}", span)
                for x in seq:
                    self._tick(span)
                    env[target] = x
                    out = body(env, me)
                    if out is not None:
                        return out
                return None

            return for_stmt
        raise EvalError(f"cannot execute {type(s).__name__} locally", span)

    def _tick(self, span) -> None:
        self.steps -= 1
        if self.steps < 0:
            raise EvalError("step limit exceeded", span)

    def _assign(self, target: X.Expr, value: ExprFn, span) -> StmtFn:
        if isinstance(target, X.Name):
            name = target.id

            def assign_local(env, me):
                env[name] = value(env, me)

            return assign_local
        if X.is_self_attr(target):
            attr = target.attr

            def assign_field(env, me):
                me.fields[attr] = value(env, me)

            return assign_field
        raise EvalError("unsupported assignment target", span)

    def compile_expr(self, e: X.Expr) -> ExprFn:
        span = e.span
        if isinstance(e, X.Const):
            v = e.value
            return lambda env, me: v
        if isinstance(e, X.Name):
            name = e.id
            if name == "self":
                return lambda env, me: me.as_value()

            def load(env, me):
                try:
                    return env[name]
                except KeyError:
                    raise EvalError(f"variable {name!r} is undefined", span) from None

            return load
        if isinstance(e, X.ListExpr):
            elts = [self.compile_expr(x) for x in e.elts]
            return lambda env, me: [f(env, me) for f in elts]
        if isinstance(e, X.Attribute):
            attr = e.attr
            if isinstance(e.value, X.Name) and e.value.id == "self":

                def self_field(env, me):
                    try:
                        return me.fields[attr]
                    except KeyError:
                        raise EvalError(f"field {attr!r} is unset", span) from None

                return self_field
            obj = self.compile_expr(e.value)
            return lambda env, me: get_field(obj(env, me), attr, span)
        if isinstance(e, X.Subscript):
            seq = self.compile_expr(e.value)
            idx = self.compile_expr(e.index)

            def subscript(env, me):
                try:
                    return seq(env, me)[idx(env, me)]
                except _RUNTIME_ERRORS as exc:
                    raise EvalError(f"subscript: {exc}", span) from None

            return subscript
        if isinstance(e, X.BinOp):
            op = _BINOPS[e.op]
            left = self.compile_expr(e.left)
            right = self.compile_expr(e.right)

            def binop(env, me):
                try:
                    return op(left(env, me), right(env, me))
                except _RUNTIME_ERRORS as exc:
                    raise EvalError(f"{e.op}: {exc}", span) from None

            return binop
        if isinstance(e, X.UnaryOp):
            op = _UNOPS[e.op]
            operand = self.compile_expr(e.operand)

            def unop(env, me):
                try:
                    return op(operand(env, me))
                except _RUNTIME_ERRORS as exc:
                    raise EvalError(f"{e.op}: {exc}", span) from None

            return unop
        if isinstance(e, X.BoolOp):
            fns = [self.compile_expr(v) for v in e.values]
            if e.op == "and":

                def and_(env, me):
                    v = None
                    for f in fns:
                        v = f(env, me)
                        if not v:
                            return v
                    return v

                return and_

            def or_(env, me):
                v = None
                for f in fns:
                    v = f(env, me)
                    if v:
                        return v
                return v

            return or_
        if isinstance(e, X.Compare):
            op = _CMPOPS[e.op]
            left = self.compile_expr(e.left)
            right = self.compile_expr(e.right)

            def compare(env, me):
                try:
                    return op(left(env, me), right(env, me))
                except _RUNTIME_ERRORS as exc:
                    raise EvalError(f"{e.op}: {exc}", span) from None

            return compare
        if isinstance(e, X.Call):
            return self._call(e)
        raise EvalError(f"cannot evaluate {type(e).__name__}", span)

    def _call(self, e: X.Call) -> ExprFn:
        span = e.span
        args = [self.compile_expr(a) for a in e.args]
        if e.kind == "builtin":
            fn = BUILTINS[e.target]
            name = e.target

            def builtin(env, me):
                try:
                    return fn(*[a(env, me) for a in args])
                except _RUNTIME_ERRORS as exc:
                    raise EvalError(f"{name}(): {exc}", span) from None

            return builtin
        if e.kind == "construct":
            cls = e.target

            def construct(env, me):
                return Record(cls, self.construct(cls, [a(env, me) for a in args]))

            return construct
        method = e.func.attr
        if e.kind == "self":

            def self_call(env, me):
                return self.run_method(me, method, [a(env, me) for a in args])

            return self_call
        if e.kind == "value":
            recv = self.compile_expr(e.func.value)

            def value_call(env, me):
                obj = recv(env, me)
                if not isinstance(obj, Record):
                    raise EvalError(f"method call {method}() on {type(obj).__name__}", span)
                target = Entity(self.classes[obj.cls], dict(obj.fields))  # records are values
                return self.run_method(target, method, [a(env, me) for a in args])

            return value_call
        raise EvalError(f"remote call {method}() must be split out of the block", span)
