"""Brute-force sequential interpreter of the unsplit program.

Ground truth for equivalence testing. It walks the analyzed source bodies
directly: remote calls are ordinary nested calls on the callee's state, there
are no events, no splitting and no serialization. It deliberately shares no
evaluation code with the runtime, only the value classes.
"""

from __future__ import annotations

from typing import Any

from .frontend import syntax as X
from .frontend.analysis import ClassDescriptor
from .values import EntityRef, Record


class OracleError(Exception):
    pass


class _Return(Exception):
    def __init__(self, value: Any):
        self.value = value


def _binop(op: str, a: Any, b: Any) -> Any:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    if op == "//":
        return a // b
    if op == "%":
        return a % b
    raise OracleError(f"unknown operator {op}")


def _compare(op: str, a: Any, b: Any) -> bool:
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if op == "in":
        return a in b
    if op == "not in":
        return a not in b
    raise OracleError(f"unknown comparison {op}")


_BUILTINS = {
    "len": len,
    "range": lambda *a: list(range(*a)),
    "abs": abs,
    "min": min,
    "max": max,
    "str": str,
    "int": int,
    "float": float,
}


class _Self:
    def __init__(self, cls: ClassDescriptor, fields: dict[str, Any], key: Any = None):
        self.cls = cls
        self.fields = fields
        self.key = key


class Oracle:
    def __init__(self, descriptors: list[ClassDescriptor], step_limit: int = 1_000_000):
        self.classes = {c.name: c for c in descriptors}
        self.store: dict[tuple[str, Any], dict[str, Any]] = {}
        self.step_limit = step_limit
        self._steps = 0

    # -- client API -------------------------------------------------------------

    def invoke(self, cls: str, key: Any, method: str, args: list[Any]) -> Any:
        """Run one client invocation to completion; raises OracleError on failure."""
        self._steps = self.step_limit
        try:
            if method == "__init__":
                return self._create(cls, key, list(args))
            return self._call_entity(EntityRef(cls, key), method, list(args))
        except OracleError:
            raise
        except _Return:  # pragma: no cover - returns are caught per call
            raise OracleError("stray return")
        except (ZeroDivisionError, TypeError, ValueError, IndexError, OverflowError, KeyError, AttributeError) as exc:
            raise OracleError(f"{type(exc).__name__}: {exc}") from None

    def snapshot(self) -> dict[tuple[str, Any], dict[str, Any]]:
        return {k: dict(v) for k, v in self.store.items()}

    # -- entities ---------------------------------------------------------------

    def _create(self, cls: str, key: Any, args: list[Any]) -> EntityRef:
        desc = self.classes.get(cls)
        if desc is None or not desc.is_stateful:
            raise OracleError(f"unknown class {cls}")
        if (cls, key) in self.store:
            raise OracleError(f"entity already exists: {cls}<{key!r}>")
        me = _Self(desc, {})
        self._run(me, "__init__", args)
        if any(f not in me.fields for f in desc.field_names):
            raise OracleError("constructor left fields unset")
        actual = self._run(me, "__key__", [])
        if actual != key:
            raise OracleError(f"key mismatch {actual!r} != {key!r}")
        me.key = key
        self.store[(cls, key)] = me.fields
        return self._ref(me)

    def _ref(self, me: _Self) -> EntityRef:
        return EntityRef(me.cls.name, me.key, {f: me.fields[f] for f in me.cls.handle_fields})

    def _call_entity(self, ref: Any, method: str, args: list[Any]) -> Any:
        if not isinstance(ref, EntityRef):
            raise OracleError(f"remote call on {type(ref).__name__}")
        desc = self.classes.get(ref.cls)
        if desc is None:
            raise OracleError(f"unknown class {ref.cls}")
        fields = self.store.get((ref.cls, ref.key))
        if fields is None:
            raise OracleError(f"entity not found: {ref.cls}<{ref.key!r}>")
        if method == "__init__" or desc.method(method) is None:
            raise OracleError(f"unknown method {ref.cls}.{method}")
        return self._run(_Self(desc, fields, ref.key), method, args)

    def _run(self, me: _Self, method: str, args: list[Any]) -> Any:
        m = me.cls.method(method)
        if m is None:
            raise OracleError(f"unknown method {me.cls.name}.{method}")
        if len(args) != len(m.params):
            raise OracleError("arity mismatch")
        env = dict(zip(m.param_names, args))
        try:
            self._block(m.body, env, me)
        except _Return as r:
            return r.value
        return None

    # -- statements -------------------------------------------------------------

    def _block(self, body, env, me) -> None:
        for s in body:
            self._stmt(s, env, me)

    def _tick(self) -> None:
        self._steps -= 1
        if self._steps < 0:
            raise OracleError("step limit exceeded")

    def _stmt(self, s, env, me) -> None:
        if isinstance(s, X.Assign):
            self._store(s.target, self._eval(s.value, env, me), env, me)
        elif isinstance(s, X.AugAssign):
            cur = self._eval(s.target, env, me)
            self._store(s.target, _binop(s.op, cur, self._eval(s.value, env, me)), env, me)
        elif isinstance(s, X.ExprStmt):
            self._eval(s.value, env, me)
        elif isinstance(s, X.Pass):
            pass
        elif isinstance(s, X.Return):
            raise _Return(None if s.value is None else self._eval(s.value, env, me))
        elif isinstance(s, X.If):
            if self._eval(s.test, env, me):
                self._block(s.body, env, me)
            else:
                self._block(s.orelse, env, me)
        elif isinstance(s, X.While):
            while self._eval(s.test, env, me):
                self._tick()
                self._block(s.body, env, me)
        elif isinstance(s, X.For):
            seq = self._eval(s.iter, env, me)
            if not isinstance(seq, (list, str)):
                raise OracleError("iteration over non-sequence")
            for x in seq:
                self._tick()
                env[s.target] = x
                self._block(s.body, env, me)
        else:
            raise OracleError(f"unsupported statement {type(s).__name__}")

    def _store(self, target, value, env, me) -> None:
        if isinstance(target, X.Name):
            env[target.id] = value
        elif isinstance(target, X.Attribute) and isinstance(target.value, X.Name) and target.value.id == "self":
            me.fields[target.attr] = value
        else:
            raise OracleError("bad assignment target")

    # -- expressions ------------------------------------------------------------

    def _eval(self, e, env, me) -> Any:
        if isinstance(e, X.Const):
            return e.value
        if isinstance(e, X.Name):
            if e.id == "self":
                return self._ref(me) if me.cls.is_stateful else Record(me.cls.name, dict(me.fields))
            if e.id not in env:
                raise OracleError(f"undefined variable {e.id}")
            return env[e.id]
        if isinstance(e, X.ListExpr):
            return [self._eval(x, env, me) for x in e.elts]
        if isinstance(e, X.Attribute):
            if isinstance(e.value, X.Name) and e.value.id == "self":
                if e.attr not in me.fields:
                    raise OracleError(f"unset field {e.attr}")
                return me.fields[e.attr]
            obj = self._eval(e.value, env, me)
            if isinstance(obj, Record):
                return obj.fields[e.attr]
            if isinstance(obj, EntityRef):
                fields = self.store.get((obj.cls, obj.key))
                if fields is None:
                    raise OracleError(f"entity not found: {obj.cls}<{obj.key!r}>")
                return fields[e.attr]
            raise OracleError(f"attribute of {type(obj).__name__}")
        if isinstance(e, X.Subscript):
            return self._eval(e.value, env, me)[self._eval(e.index, env, me)]
        if isinstance(e, X.BinOp):
            return _binop(e.op, self._eval(e.left, env, me), self._eval(e.right, env, me))
        if isinstance(e, X.UnaryOp):
            v = self._eval(e.operand, env, me)
            return -v if e.op == "-" else (+v if e.op == "+" else not v)
        if isinstance(e, X.BoolOp):
            v = None
            for x in e.values:
                v = self._eval(x, env, me)
                if (e.op == "and") != bool(v):
                    return v
            return v
        if isinstance(e, X.Compare):
            return _compare(e.op, self._eval(e.left, env, me), self._eval(e.right, env, me))
        if isinstance(e, X.Call):
            return self._call(e, env, me)
        raise OracleError(f"unsupported expression {type(e).__name__}")

    def _call(self, e: X.Call, env, me) -> Any:
        if e.kind == "builtin":
            return _BUILTINS[e.func.id](*[self._eval(a, env, me) for a in e.args])
        if e.kind == "construct":
            desc = self.classes[e.target]
            obj = _Self(desc, {})
            self._run(obj, "__init__", [self._eval(a, env, me) for a in e.args])
            return Record(desc.name, obj.fields)
        recv_expr = e.func.value
        method = e.func.attr
        if e.kind == "self":
            return self._run(me, method, [self._eval(a, env, me) for a in e.args])
        recv = self._eval(recv_expr, env, me)
        args = [self._eval(a, env, me) for a in e.args]
        if e.kind == "value":
            if not isinstance(recv, Record):
                raise OracleError("value method on non-object")
            return self._run(_Self(self.classes[recv.cls], dict(recv.fields)), method, args)  # records are values
        if e.kind == "remote":
            return self._call_entity(recv, method, args)
        raise OracleError(f"unresolved call {method}")
