"""Entity discovery, typing and remote-reference resolution.

The checker walks every method once, inferring the types the source leaves
implicit (unannotated locals, the return type of ``__key__``), tracking
definite assignment, and rewriting each :class:`Call` with its resolved kind.
A call whose receiver is statically typed as a ``@stateflow`` class and is not
``self`` becomes a :class:`CallSite`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import diagnostics as D
from .diagnostics import Diagnostic
from .syntax import (
    BOOL,
    FLOAT,
    INT,
    NONE,
    PRIMITIVES,
    STR,
    Assign,
    Attribute,
    AugAssign,
    BinOp,
    BoolOp,
    Call,
    ClassDef,
    Compare,
    Const,
    Expr,
    ExprStmt,
    For,
    FunctionDef,
    If,
    ListExpr,
    Name,
    Pass,
    Return,
    SourceProgram,
    Span,
    Stmt,
    Subscript,
    TypeRef,
    UnaryOp,
    While,
    is_self_attr,
    list_of,
)

BUILTINS = ("len", "range", "abs", "min", "max", "str", "int", "float")
KEY_TYPES = ("int", "str")


@dataclass(frozen=True)
class CallSite:
    receiver: str  # receiver expression as written
    receiver_class: str
    method: str
    args: tuple[Expr, ...]
    span: Span | None = None


@dataclass
class MethodDescriptor:
    name: str
    class_name: str
    params: list[tuple[str, TypeRef | None]]
    return_type: TypeRef | None
    body: tuple[Stmt, ...]
    remote_call_sites: list[CallSite] = field(default_factory=list)
    locals: dict[str, TypeRef] = field(default_factory=dict)
    return_annotated: bool = True
    span: Span | None = None

    @property
    def qualname(self) -> str:
        return f"{self.class_name}.{self.name}"

    @property
    def param_names(self) -> list[str]:
        return [p for p, _ in self.params]


@dataclass
class ClassDescriptor:
    name: str
    state_fields: list[tuple[str, TypeRef | None]]
    methods: list[MethodDescriptor]
    key_method: MethodDescriptor | None
    is_stateful: bool
    key_field: str | None = None
    span: Span | None = None
    # immutable fields some method reads through a handle; None = not analyzed
    handle_reads: frozenset[str] | None = None

    def method(self, name: str) -> MethodDescriptor | None:
        for m in self.methods:
            if m.name == name:
                return m
        return None

    def field_type(self, name: str) -> TypeRef | None:
        for f, t in self.state_fields:
            if f == name:
                return t
        return None

    @property
    def field_names(self) -> list[str]:
        return [f for f, _ in self.state_fields]

    @property
    def mutable_fields(self) -> set[str]:
        """Fields assigned by some method other than the constructor."""
        out: set[str] = set()
        for m in self.methods:
            if m.name == "__init__":
                continue
            for stmt in _walk(m.body):
                if isinstance(stmt, (Assign, AugAssign)) and is_self_attr(stmt.target):
                    out.add(stmt.target.attr)
        return out

    @property
    def immutable_fields(self) -> list[str]:
        mutable = self.mutable_fields
        return [f for f in self.field_names if f not in mutable]

    @property
    def handle_fields(self) -> list[str]:
        """Immutable fields a handle must carry: those read through handles, or all if unknown."""
        if self.handle_reads is None:
            return self.immutable_fields
        return [f for f in self.immutable_fields if f in self.handle_reads]


def _walk(body):
    for s in body:
        yield s
        if isinstance(s, If):
            yield from _walk(s.body)
            yield from _walk(s.orelse)
        elif isinstance(s, (For, While)):
            yield from _walk(s.body)


# ---------------------------------------------------------------------------
# discovery


def _method_descriptor(cls: ClassDef, fn: FunctionDef) -> MethodDescriptor:
    return MethodDescriptor(
        name=fn.name,
        class_name=cls.name,
        params=[(p.name, p.annotation) for p in fn.params],
        return_type=fn.returns,
        body=fn.body,
        return_annotated=fn.returns is not None,
        span=fn.span,
    )


def _constructor_fields(init: FunctionDef) -> list[tuple[str, TypeRef | None, Span | None]]:
    seen: dict[str, tuple[str, TypeRef | None, Span | None]] = {}
    for stmt in _walk(init.body):
        if isinstance(stmt, Assign) and is_self_attr(stmt.target):
            name = stmt.target.attr
            if name not in seen or (seen[name][1] is None and stmt.annotation is not None):
                seen[name] = (name, stmt.annotation, stmt.span)
    return list(seen.values())


def _key_field(key_method: FunctionDef) -> str | None:
    body = [s for s in key_method.body if not isinstance(s, Pass)]
    if len(body) == 1 and isinstance(body[0], Return) and body[0].value is not None and is_self_attr(body[0].value):
        return body[0].value.attr
    return None


def discover_entities(program: SourceProgram) -> tuple[list[ClassDescriptor], list[Diagnostic]]:
    """One descriptor per class; ``is_stateful`` marks the decorated ones."""
    diags: list[Diagnostic] = []
    out: list[ClassDescriptor] = []
    seen: dict[str, ClassDef] = {}
    for cls in program.classes:
        if cls.name in seen:
            diags.append(D.error(D.DUPLICATE_CLASS, f"duplicate class name {cls.name!r}", cls.span))
            continue
        if cls.name in PRIMITIVES or cls.name in ("List", "list") or cls.name in BUILTINS:
            diags.append(D.error(D.DUPLICATE_CLASS, f"class name {cls.name!r} shadows a builtin", cls.span))
            continue
        seen[cls.name] = cls
        for dec in cls.decorators:
            if dec != "stateflow":
                diags.append(D.error(D.UNSUPPORTED, f"unsupported construct: decorator @{dec}", cls.span))
        fns = {fn.name: fn for fn in cls.methods}
        names = [fn.name for fn in cls.methods]
        for name in {n for n in names if names.count(n) > 1}:
            diags.append(D.error(D.DUPLICATE_CLASS, f"duplicate method {cls.name}.{name}", cls.span))
        init = fns.get("__init__")
        key_fn = fns.get("__key__")
        stateful = cls.is_stateful
        if init is None:
            diags.append(D.error(D.MISSING_INIT, f"class {cls.name} is missing a constructor (__init__)", cls.span))
        if stateful and key_fn is None:
            diags.append(D.error(D.MISSING_KEY, f"stateful class {cls.name} is missing key method (__key__)", cls.span))
        fields = _constructor_fields(init) if init is not None else []
        methods = [_method_descriptor(cls, fn) for fn in cls.methods]
        key_desc = next((m for m in methods if m.name == "__key__"), None)
        desc = ClassDescriptor(
            name=cls.name,
            state_fields=[(n, t) for n, t, _ in fields],
            methods=methods,
            key_method=key_desc if stateful else None,
            is_stateful=stateful,
            key_field=_key_field(key_fn) if (stateful and key_fn is not None) else None,
            span=cls.span,
        )
        out.append(desc)
    return out, diags


# ---------------------------------------------------------------------------
# checking


class _ClassTable:
    def __init__(self, descriptors: list[ClassDescriptor]):
        self.by_name = {d.name: d for d in descriptors}

    def get(self, name: str) -> ClassDescriptor | None:
        return self.by_name.get(name)

    def known_type(self, t: TypeRef) -> bool:
        if t.name in PRIMITIVES:
            return True
        if t.is_list:
            return len(t.args) == 1 and self.known_type(t.elem)
        return t.name in self.by_name


_ALL = object()  # definite-assignment "top": reached only by paths that returned


class _MethodChecker:
    def __init__(self, owner: "_ProgramChecker", cls: ClassDescriptor, method: MethodDescriptor):
        self.owner = owner
        self.cls = cls
        self.method = method
        self.diags: list[Diagnostic] = []
        self.locals: dict[str, TypeRef] = {}
        self.returns: list[TypeRef] = []
        self.call_sites: list[CallSite] = []
        self.is_init = method.name == "__init__"

    # -- helpers -----------------------------------------------------------

    def err(self, code: str, msg: str, span: Span | None) -> None:
        self.diags.append(D.error(code, msg, span or self.method.span))

    def warn(self, code: str, msg: str, span: Span | None) -> None:
        self.diags.append(D.warning(code, msg, span or self.method.span))

    def compatible(self, expected: TypeRef, actual: TypeRef) -> bool:
        if expected == actual:
            return True
        if expected == FLOAT and actual == INT:
            return True
        if expected.is_list and actual.is_list:
            return self.compatible(expected.elem, actual.elem)
        return False

    def expect(self, expected: TypeRef | None, actual: TypeRef | None, span: Span | None, what: str) -> None:
        if expected is None or actual is None:
            return
        if not self.compatible(expected, actual):
            self.err(D.TYPE, f"type mismatch in {what}: expected {expected}, got {actual}", span)

    # -- entry -------------------------------------------------------------

    def run(self) -> tuple[tuple[Stmt, ...], TypeRef | None]:
        m = self.method
        defined: set[str] = {"self"}
        for name, ann in m.params:
            if ann is None:
                self.err(D.UNTYPED_PARAM, f"untyped parameter {name!r} in {m.qualname}", m.span)
                continue
            if not self.owner.table.known_type(ann):
                self.err(D.UNKNOWN_NAME, f"unknown type {ann} for parameter {name!r}", m.span)
            self.locals[name] = ann
            defined.add(name)
        if m.return_type is not None and not self.owner.table.known_type(m.return_type):
            self.err(D.UNKNOWN_NAME, f"unknown return type {m.return_type} in {m.qualname}", m.span)
        body, _ = self.block(m.body, defined)
        if m.return_type is not None:
            ret = m.return_type
        elif not self.returns:
            ret = NONE
        else:
            first = self.returns[0]
            ret = first
            for t in self.returns[1:]:
                if self.compatible(ret, t):
                    continue
                if self.compatible(t, ret):
                    ret = t
                    continue
                self.err(D.UNTYPED_RETURN, f"untyped return in {m.qualname}: cannot infer a single type from {first} and {t}", m.span)
                ret = None
                break
        return body, ret

    # -- statements --------------------------------------------------------

    def block(self, stmts: tuple[Stmt, ...], defined):
        out: list[Stmt] = []
        for i, stmt in enumerate(stmts):
            if defined is _ALL:
                self.warn(D.UNREACHABLE, "unreachable code after return", stmt.span)
                break
            new, defined = self.stmt(stmt, defined)
            out.append(new)
        return tuple(out), defined

    def stmt(self, stmt: Stmt, defined):
        if isinstance(stmt, Assign):
            return self.assign(stmt, defined)
        if isinstance(stmt, AugAssign):
            target = stmt.target
            value, vt = self.expr(stmt.value, defined)
            if isinstance(target, Name):
                if target.id not in defined:
                    self.err(D.UNDEFINED, f"possibly undefined variable {target.id!r}", target.span)
                tt = self.locals.get(target.id)
                if target.id == "self":
                    self.err(D.MUTATION, "cannot assign to self", stmt.span)
                new_target = target
            else:
                new_target, tt = self.field_target(target, stmt.span, defined)
            rt = self.binop_type(stmt.op, tt, vt, stmt.span) if tt is not None and vt is not None else None
            self.expect(tt, rt, stmt.span, "augmented assignment")
            return replace(stmt, target=new_target, value=value), defined
        if isinstance(stmt, If):
            test, tt = self.expr(stmt.test, defined)
            body, d1 = self.block(stmt.body, set(defined))
            orelse, d2 = self.block(stmt.orelse, set(defined))
            return replace(stmt, test=test, body=body, orelse=orelse), _meet(d1, d2)
        if isinstance(stmt, For):
            it, itype = self.expr(stmt.iter, defined)
            elem = None
            if itype is not None:
                if not itype.is_list:
                    self.err(D.TYPE, f"for-loop iterable must be a list, got {itype}", stmt.iter.span)
                else:
                    elem = itype.elem
            if stmt.target == "self":
                self.err(D.MUTATION, "cannot rebind self", stmt.span)
            if elem is not None:
                self.declare(stmt.target, elem, stmt.span)
            inner = set(defined) | {stmt.target}
            body, _ = self.block(stmt.body, inner)
            return replace(stmt, iter=it, body=body), defined
        if isinstance(stmt, While):
            test, _ = self.expr(stmt.test, defined)
            body, _ = self.block(stmt.body, set(defined))
            return replace(stmt, test=test, body=body), defined
        if isinstance(stmt, Return):
            if stmt.value is None:
                self.returns.append(NONE)
                if self.method.return_type not in (None, NONE):
                    self.err(D.TYPE, f"missing return value in {self.method.qualname}", stmt.span)
                return stmt, _ALL
            value, vt = self.expr(stmt.value, defined)
            if self.is_init:
                self.err(D.UNSUPPORTED, "unsupported construct: constructor returning a value", stmt.span)
            if vt is not None:
                self.returns.append(vt)
                self.expect(self.method.return_type, vt, stmt.span, "return")
            return replace(stmt, value=value), _ALL
        if isinstance(stmt, ExprStmt):
            value, _ = self.expr(stmt.value, defined)
            return replace(stmt, value=value), defined
        if isinstance(stmt, Pass):
            return stmt, defined
        self.err(D.UNSUPPORTED, f"unsupported construct: {type(stmt).__name__}", getattr(stmt, "span", None))
        return stmt, defined

    def declare(self, name: str, t: TypeRef, span: Span | None) -> None:
        old = self.locals.get(name)
        if old is None:
            self.locals[name] = t
        elif not self.compatible(old, t):
            self.err(D.TYPE, f"variable {name!r} redeclared as {t} (was {old})", span)

    def assign(self, stmt: Assign, defined):
        target = stmt.target
        ann = stmt.annotation
        if ann is not None and not self.owner.table.known_type(ann):
            self.err(D.UNKNOWN_NAME, f"unknown type {ann}", stmt.span)
            ann = None
        value, vt = self.expr(stmt.value, defined, expected=ann or self.target_hint(target))
        if isinstance(target, Name):
            if target.id == "self":
                self.err(D.MUTATION, "cannot rebind self", stmt.span)
                return stmt, defined
            if ann is not None:
                self.expect(ann, vt, stmt.span, f"assignment to {target.id!r}")
                self.declare(target.id, ann, stmt.span)
            elif target.id in self.locals:
                self.expect(self.locals[target.id], vt, stmt.span, f"assignment to {target.id!r}")
            elif vt is None:
                self.err(D.UNTYPED_VAR, f"untyped variable {target.id!r}: add an annotation", stmt.span)
            else:
                self.locals[target.id] = vt
            return replace(stmt, value=value), (defined | {target.id}) if defined is not _ALL else defined
        new_target, ft = self.field_target(target, stmt.span, defined, declaring=self.is_init)
        if self.is_init and is_self_attr(target):
            if ann is None and self.cls.field_type(target.attr) is None:
                self.err(D.UNTYPED_FIELD, f"state field {target.attr!r} has no declared type", stmt.span)
            ft = ann or ft
        self.expect(ft, vt, stmt.span, f"assignment to field {getattr(target, 'attr', '?')!r}")
        return replace(stmt, target=new_target, value=value), defined

    def target_hint(self, target: Expr) -> TypeRef | None:
        if isinstance(target, Name):
            return self.locals.get(target.id)
        if is_self_attr(target):
            return self.cls.field_type(target.attr)
        return None

    def field_target(self, target: Expr, span, defined, declaring: bool = False):
        if not isinstance(target, Attribute):
            self.err(D.UNSUPPORTED, "unsupported construct: assignment target", span)
            return target, None
        if not is_self_attr(target):
            self.err(D.MUTATION, f"cannot assign field {target.attr!r} of another object; call one of its methods", span)
            return target, None
        name = target.attr
        ft = self.cls.field_type(name)
        if ft is None and not declaring:
            self.err(D.UNKNOWN_NAME, f"unknown state field {name!r} on {self.cls.name}", span)
        if not self.is_init:
            if not self.cls.is_stateful:
                self.err(D.MUTATION, f"value objects are immutable: {self.cls.name}.{name} assigned outside the constructor", span)
            elif name == self.cls.key_field:
                self.warn(D.KEY_REASSIGN, f"key reassignment: {self.cls.name}.{name} is the entity key", span)
        return target, ft

    # -- expressions -------------------------------------------------------

    def expr(self, e: Expr, defined, expected: TypeRef | None = None) -> tuple[Expr, TypeRef | None]:
        if isinstance(e, Const):
            v = e.value
            if isinstance(v, bool):
                return e, BOOL
            if isinstance(v, int):
                return e, INT
            if isinstance(v, float):
                return e, FLOAT
            return e, STR
        if isinstance(e, Name):
            if e.id == "self":
                return e, TypeRef(self.cls.name)
            if defined is not _ALL and e.id not in defined:
                if e.id in self.locals:
                    self.err(D.UNDEFINED, f"possibly undefined variable {e.id!r}", e.span)
                else:
                    self.err(D.UNKNOWN_NAME, f"undefined name {e.id!r}", e.span)
                return e, self.locals.get(e.id)
            return e, self.locals.get(e.id)
        if isinstance(e, ListExpr):
            elts = []
            types = []
            want = expected.elem if expected is not None and expected.is_list else None
            for x in e.elts:
                nx, tx = self.expr(x, defined, want)
                elts.append(nx)
                types.append(tx)
            new = replace(e, elts=tuple(elts))
            if not e.elts:
                return new, expected if expected is not None and expected.is_list else None
            base = want or types[0]
            for t in types:
                if t is not None and base is not None and not self.compatible(base, t):
                    self.err(D.TYPE, f"list elements must share one type: {base} vs {t}", e.span)
                    return new, None
            return new, list_of(base) if base is not None else None
        if isinstance(e, Attribute):
            value, vt = self.expr(e.value, defined)
            new = replace(e, value=value)
            if vt is None:
                self.owner.untyped_reads = True
                return new, None
            desc = self.owner.table.get(vt.name)
            if desc is None:
                self.err(D.TYPE, f"{vt} has no attribute {e.attr!r}", e.span)
                return new, None
            ft = desc.field_type(e.attr)
            if ft is None and not (desc is self.cls and self.is_init):
                self.err(D.UNKNOWN_NAME, f"{desc.name} has no field {e.attr!r}", e.span)
                return new, None
            if desc.is_stateful and not (isinstance(e.value, Name) and e.value.id == "self"):
                self.owner.handle_reads.setdefault(desc.name, set()).add(e.attr)
                if e.attr in desc.mutable_fields:
                    self.err(
                        D.REMOTE_FIELD,
                        f"remote read of mutable field {desc.name}.{e.attr}; call a method of {desc.name} instead",
                        e.span,
                    )
            return new, ft
        if isinstance(e, Subscript):
            value, vt = self.expr(e.value, defined)
            index, it = self.expr(e.index, defined)
            new = replace(e, value=value, index=index)
            self.expect(INT, it, e.index.span, "subscript index")
            if vt is None:
                return new, None
            if vt.is_list:
                return new, vt.elem
            if vt == STR:
                return new, STR
            self.err(D.TYPE, f"cannot subscript {vt}", e.span)
            return new, None
        if isinstance(e, BinOp):
            left, lt = self.expr(e.left, defined, expected)
            right, rt = self.expr(e.right, defined, expected)
            new = replace(e, left=left, right=right)
            if lt is None or rt is None:
                return new, None
            return new, self.binop_type(e.op, lt, rt, e.span)
        if isinstance(e, UnaryOp):
            operand, ot = self.expr(e.operand, defined)
            new = replace(e, operand=operand)
            if e.op == "not":
                return new, BOOL
            if ot is not None and not ot.is_numeric:
                self.err(D.TYPE, f"unary {e.op} on {ot}", e.span)
                return new, None
            return new, ot
        if isinstance(e, BoolOp):
            values = []
            types = []
            for v in e.values:
                nv, tv = self.expr(v, defined)
                values.append(nv)
                types.append(tv)
            new = replace(e, values=tuple(values))
            known = [t for t in types if t is not None]
            if len(known) != len(types):
                return new, None
            if all(t == known[0] for t in known):
                return new, known[0]
            self.err(D.TYPE, f"operands of {e.op} must share one type", e.span)
            return new, None
        if isinstance(e, Compare):
            left, lt = self.expr(e.left, defined)
            right, rt = self.expr(e.right, defined)
            new = replace(e, left=left, right=right)
            if lt is None or rt is None:
                return new, BOOL
            if e.op in ("in", "not in"):
                if rt.is_list:
                    if not (self.compatible(rt.elem, lt) or self.compatible(lt, rt.elem)):
                        self.err(D.TYPE, f"membership test of {lt} in {rt}", e.span)
                elif rt == STR:
                    self.expect(STR, lt, e.span, "substring test")
                else:
                    self.err(D.TYPE, f"membership test on {rt}", e.span)
            elif e.op in ("==", "!="):
                if not (self.compatible(lt, rt) or self.compatible(rt, lt)):
                    self.err(D.TYPE, f"comparing {lt} with {rt}", e.span)
            else:
                ok = (lt.is_numeric and rt.is_numeric) or (lt == rt == STR)
                if not ok:
                    self.err(D.TYPE, f"ordering comparison between {lt} and {rt}", e.span)
            return new, BOOL
        if isinstance(e, Call):
            return self.call(e, defined, expected)
        self.err(D.UNSUPPORTED, f"unsupported construct: {type(e).__name__}", getattr(e, "span", None))
        return e, None

    def binop_type(self, op: str, lt: TypeRef, rt: TypeRef, span) -> TypeRef | None:
        if lt.is_numeric and rt.is_numeric:
            if op == "/":
                return FLOAT
            return FLOAT if FLOAT in (lt, rt) else INT
        if op == "+" and lt == rt == STR:
            return STR
        if op == "+" and lt.is_list and rt.is_list:
            if self.compatible(lt, rt):
                return lt
            if self.compatible(rt, lt):
                return rt
        if op == "*" and {lt.name, rt.name} == {"str", "int"}:
            return STR
        self.err(D.TYPE, f"unsupported operand types for {op}: {lt} and {rt}", span)
        return None

    def args(self, e: Call, defined, params: list[tuple[str, TypeRef | None]], what: str):
        new_args = []
        if len(e.args) != len(params):
            self.err(D.ARITY, f"{what} takes {len(params)} argument(s), {len(e.args)} given", e.span)
            for a in e.args:
                na, _ = self.expr(a, defined)
                new_args.append(na)
            return tuple(new_args)
        for a, (pname, ptype) in zip(e.args, params):
            na, at = self.expr(a, defined, ptype)
            new_args.append(na)
            if ptype is not None and at is not None and not self.compatible(ptype, at):
                self.err(D.TYPE, f"argument {pname!r} of {what}: expected {ptype}, got {at}", a.span)
        return tuple(new_args)

    def call(self, e: Call, defined, expected):
        func = e.func
        if isinstance(func, Name):
            name = func.id
            if name in BUILTINS and name not in self.owner.table.by_name:
                return self.builtin(e, defined)
            desc = self.owner.table.get(name)
            if desc is None:
                self.err(D.UNKNOWN_NAME, f"undefined function {name!r}", e.span)
                return e, None
            if desc.is_stateful:
                self.err(
                    D.UNSUPPORTED_CALL,
                    f"cannot construct stateful entity {name} inside a method; create it through the client",
                    e.span,
                )
                return e, None
            init = desc.method("__init__")
            params = init.params if init is not None else []
            args = self.args(e, defined, params, f"{name}()")
            return replace(e, args=args, kind="construct", target=name), TypeRef(name)
        assert isinstance(func, Attribute)
        recv, rt = self.expr(func.value, defined)
        new_func = replace(func, value=recv)
        if rt is None:
            args = tuple(self.expr(a, defined)[0] for a in e.args)
            return replace(e, func=new_func, args=args), None
        desc = self.owner.table.get(rt.name)
        if desc is None:
            self.err(D.UNKNOWN_METHOD, f"{rt} has no method {func.attr!r}", e.span)
            return e, None
        target = desc.method(func.attr)
        if target is None or target.name in ("__init__",):
            self.err(D.UNKNOWN_METHOD, f"call to unknown method {desc.name}.{func.attr}", e.span)
            args = tuple(self.expr(a, defined)[0] for a in e.args)
            return replace(e, func=new_func, args=args), None
        args = self.args(e, defined, target.params, f"{desc.name}.{func.attr}")
        ret = self.owner.return_type(desc, target, e.span, self)
        is_self = isinstance(recv, Name) and recv.id == "self"
        if desc.is_stateful and not is_self:
            if not self.cls.is_stateful:
                self.err(D.UNSUPPORTED_CALL, f"value class {self.cls.name} cannot call stateful entities", e.span)
            elif self.is_init:
                self.err(D.UNSUPPORTED_CALL, "constructors cannot call remote entities", e.span)
            self.call_sites.append(
                CallSite(receiver=_expr_text(recv), receiver_class=desc.name, method=func.attr, args=args, span=e.span)
            )
            return replace(e, func=new_func, args=args, kind="remote", target=desc.name), ret
        kind = "self" if is_self else "value"
        if kind == "self" and desc is not self.cls:  # pragma: no cover - self always has own class
            kind = "value"
        return replace(e, func=new_func, args=args, kind=kind, target=desc.name), ret

    def builtin(self, e: Call, defined):
        name = e.func.id
        args = []
        types = []
        for a in e.args:
            na, ta = self.expr(a, defined)
            args.append(na)
            types.append(ta)
        new = replace(e, args=tuple(args), kind="builtin", target=name)
        n = len(args)

        def need(count: range | int) -> bool:
            ok = n in count if isinstance(count, range) else n == count
            if not ok:
                self.err(D.ARITY, f"{name}() got {n} argument(s)", e.span)
            return ok

        if any(t is None for t in types):
            return new, {"len": INT, "range": list_of(INT), "str": STR, "int": INT, "float": FLOAT}.get(name)
        if name == "len":
            if need(1) and not (types[0].is_list or types[0] == STR):
                self.err(D.TYPE, f"len() of {types[0]}", e.span)
            return new, INT
        if name == "range":
            if need(range(1, 3)):
                for t in types:
                    self.expect(INT, t, e.span, "range()")
            return new, list_of(INT)
        if name == "abs":
            if need(1) and not types[0].is_numeric:
                self.err(D.TYPE, f"abs() of {types[0]}", e.span)
            return new, types[0] if n else None
        if name in ("min", "max"):
            if n == 1:
                if not types[0].is_list:
                    self.err(D.TYPE, f"{name}() of {types[0]}", e.span)
                    return new, None
                return new, types[0].elem
            if need(2):
                if types[0].is_numeric and types[1].is_numeric:
                    return new, FLOAT if FLOAT in types else INT
                if types[0] == types[1] == STR:
                    return new, STR
                self.err(D.TYPE, f"{name}() of {types[0]} and {types[1]}", e.span)
            return new, None
        if name == "str":
            need(1)
            return new, STR
        if name in ("int", "float"):
            if need(1) and not (types[0].is_numeric or types[0] in (STR, BOOL)):
                self.err(D.TYPE, f"{name}() of {types[0]}", e.span)
            return new, INT if name == "int" else FLOAT
        return new, None  # pragma: no cover


def _meet(a, b):
    if a is _ALL:
        return b
    if b is _ALL:
        return a
    return a & b


def _expr_text(e: Expr) -> str:
    from .syntax import format_expr

    return format_expr(e)


@dataclass
class _Checked:
    body: tuple[Stmt, ...]
    return_type: TypeRef | None
    locals: dict[str, TypeRef]
    call_sites: list[CallSite]
    diags: list[Diagnostic]


class _ProgramChecker:
    def __init__(self, descriptors: list[ClassDescriptor]):
        self.table = _ClassTable(descriptors)
        self.results: dict[tuple[str, str], _Checked] = {}
        self.in_progress: set[tuple[str, str]] = set()
        self.handle_reads: dict[str, set[str]] = {}
        self.untyped_reads = False  # some attribute read had an unknown receiver type

    def check(self, cls: ClassDescriptor, method: MethodDescriptor) -> _Checked:
        key = (cls.name, method.name)
        if key in self.results:
            return self.results[key]
        self.in_progress.add(key)
        mc = _MethodChecker(self, cls, method)
        body, ret = mc.run()
        self.in_progress.discard(key)
        res = _Checked(body, ret, mc.locals, mc.call_sites, mc.diags)
        self.results[key] = res
        return res

    def return_type(self, cls: ClassDescriptor, method: MethodDescriptor, span, caller: _MethodChecker) -> TypeRef | None:
        if method.return_type is not None:
            return method.return_type
        key = (cls.name, method.name)
        if key in self.results:
            return self.results[key].return_type
        if key in self.in_progress:
            caller.err(D.UNTYPED_RETURN, f"untyped return: cannot infer return type of recursive {cls.name}.{method.name}", span)
            return None
        return self.check(cls, method).return_type


def _class_diags(cls: ClassDescriptor, table: _ClassTable) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for name, t in cls.state_fields:
        if t is None:
            diags.append(D.error(D.UNTYPED_FIELD, f"state field {cls.name}.{name} has no declared type", cls.span))
        elif not table.known_type(t):
            diags.append(D.error(D.UNKNOWN_NAME, f"unknown type {t} for field {cls.name}.{name}", cls.span))
        elif not cls.is_stateful and not _serializable_value_type(t, table):
            diags.append(
                D.error(D.TYPE, f"value class field {cls.name}.{name} must hold literals, lists or value objects, not {t}", cls.span)
            )
    if cls.is_stateful and cls.key_method is not None:
        if cls.key_method.params:
            diags.append(D.error(D.BAD_KEY, f"{cls.name}.__key__ takes no parameters", cls.key_method.span))
        if cls.key_field is None or cls.key_field not in cls.field_names:
            diags.append(D.error(D.BAD_KEY, f"{cls.name}.__key__ must return one of the state fields", cls.key_method.span))
        else:
            kt = cls.field_type(cls.key_field)
            if kt is not None and kt.name not in KEY_TYPES:
                diags.append(D.error(D.BAD_KEY, f"key field {cls.name}.{cls.key_field} must be int or str, not {kt}", cls.key_method.span))
    return diags


def _serializable_value_type(t: TypeRef, table: _ClassTable, seen: frozenset = frozenset()) -> bool:
    if t.name in PRIMITIVES:
        return True
    if t.is_list:
        return _serializable_value_type(t.elem, table, seen)
    desc = table.get(t.name)
    if desc is None or desc.is_stateful:
        return False
    if t.name in seen:
        return True
    return all(ft is not None and _serializable_value_type(ft, table, seen | {t.name}) for _, ft in desc.state_fields)


def _check_program(descriptors: list[ClassDescriptor]) -> tuple[_ProgramChecker, dict[str, list[Diagnostic]]]:
    checker = _ProgramChecker(descriptors)
    per_class: dict[str, list[Diagnostic]] = {}
    for cls in descriptors:
        diags = _class_diags(cls, checker.table)
        for m in cls.methods:
            diags.extend(checker.check(cls, m).diags)
        per_class[cls.name] = diags
    # self-calls into methods that will be split are not supported
    for cls in descriptors:
        for m in cls.methods:
            res = checker.results[(cls.name, m.name)]
            for stmt in _walk(res.body):
                for call in _calls_in_stmt(stmt):
                    if call.kind == "self":
                        callee = checker.results.get((cls.name, call.func.attr))
                        if callee is not None and callee.call_sites:
                            per_class[cls.name].append(
                                D.error(
                                    D.UNSUPPORTED_CALL,
                                    f"{cls.name}.{m.name} calls {call.func.attr} on self, which makes remote calls; "
                                    "only methods without remote calls may be called on self",
                                    call.span,
                                )
                            )
    return checker, per_class


def _calls_in_stmt(stmt: Stmt):
    from .syntax import iter_exprs, stmt_exprs

    for e in stmt_exprs(stmt):
        for sub in iter_exprs(e):
            if isinstance(sub, Call):
                yield sub


def validate_entity(descriptor: ClassDescriptor, classes: list[ClassDescriptor] | None = None) -> list[Diagnostic]:
    """All diagnostics for one class, checked against the given class table.

    ``classes`` defaults to just the descriptor itself, which is enough for a
    class that references no other classes.
    """
    table = list(classes) if classes is not None else [descriptor]
    if descriptor not in table:
        table.append(descriptor)
    _, per_class = _check_program(table)
    return per_class[descriptor.name]


def resolve_remote_refs(
    program: SourceProgram, descriptors: list[ClassDescriptor]
) -> tuple[list[ClassDescriptor], list[Diagnostic]]:
    """Type-check every method and attach its remote call sites.

    Returns new descriptors whose method bodies carry resolved call kinds,
    whose ``locals`` map every variable to its type, and whose unannotated
    return types are filled in by inference.
    """
    checker, per_class = _check_program(descriptors)
    diags = [d for cls in descriptors for d in per_class[cls.name]]
    out: list[ClassDescriptor] = []
    for cls in descriptors:
        methods = []
        for m in cls.methods:
            res = checker.results[(cls.name, m.name)]
            methods.append(
                replace(
                    m,
                    body=res.body,
                    return_type=res.return_type,
                    remote_call_sites=list(res.call_sites),
                    locals=dict(res.locals),
                )
            )
        key = next((m for m in methods if m.name == "__key__"), None)
        reads = None if checker.untyped_reads else frozenset(checker.handle_reads.get(cls.name, ()))
        out.append(replace(cls, methods=methods, key_method=key if cls.is_stateful else None, handle_reads=reads))
    return out, diags


def analyze(program: SourceProgram) -> tuple[list[ClassDescriptor], list[Diagnostic]]:
    """discover → validate → resolve in one pass; diagnostics deduplicated."""
    descriptors, diags = discover_entities(program)
    if D.has_errors(diags):
        return descriptors, diags
    resolved, more = resolve_remote_refs(program, descriptors)
    return resolved, diags + more

