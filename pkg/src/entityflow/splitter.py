"""Split methods with remote calls into continuation blocks.

A method that calls another entity cannot run to completion inside one
operator invocation. It is cut into blocks at every remote call and every
control-flow statement; the blocks plus the remote-call nodes between them
form a :class:`StateMachine` that the runtime walks one event at a time.

Each block takes the variables it reads as parameters and hands back the
variables it defines that some later block still needs; the runtime keeps
those values in the execution graph's visit log.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Union

from .frontend import diagnostics as D
from .frontend.analysis import ClassDescriptor, MethodDescriptor
from .frontend.diagnostics import Diagnostic
from .frontend.syntax import (
    BOOL,
    INT,
    Assign,
    Attribute,
    AugAssign,
    BinOp,
    BoolOp,
    Call,
    CallRemote,
    Compare,
    Const,
    Expr,
    ExprStmt,
    For,
    If,
    ListExpr,
    Name,
    Pass,
    Stmt,
    Subscript,
    TypeRef,
    UnaryOp,
    While,
    format_expr,
    format_stmt,
    is_self_attr,
    iter_exprs,
    list_of,
    names_in,
)
from .frontend.syntax import Return as ReturnStmt

# ---------------------------------------------------------------------------
# terminators


@dataclass(frozen=True)
class InvokeRemote:
    receiver: str  # slot holding the entity handle
    class_name: str
    method: str
    arg_slots: tuple[str, ...]
    node: str  # id of the RemoteCall node this block transfers to


@dataclass(frozen=True)
class Branch:
    slot: str


@dataclass(frozen=True)
class LoopIterate:
    slot: str


@dataclass(frozen=True)
class Return:
    value: Expr | None = None


@dataclass(frozen=True)
class FallThrough:
    next: str


Terminator = Union[InvokeRemote, Branch, LoopIterate, Return, FallThrough]


@dataclass(frozen=True)
class SplitBlock:
    id: str
    params: tuple[tuple[str, TypeRef | None], ...]
    body: tuple[Stmt, ...]
    returns: tuple[str, ...]
    terminator: Terminator

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p for p, _ in self.params)


@dataclass(frozen=True)
class RemoteCallNode:
    id: str
    class_name: str
    method: str
    result: str  # slot receiving the callee's return value


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    label: str  # true | false | iterate | done | next | call | return-to


@dataclass(frozen=True)
class StateMachine:
    method: str  # "Class.method"
    blocks: tuple[SplitBlock, ...]
    calls: tuple[RemoteCallNode, ...]
    edges: tuple[Edge, ...]
    entry: str
    exits: tuple[str, ...]

    @property
    def nodes(self) -> list[str]:
        return [b.id for b in self.blocks] + [c.id for c in self.calls]

    @cached_property
    def _index(self) -> tuple[dict, dict, dict]:
        blocks = {b.id: b for b in self.blocks}
        calls = {c.id: c for c in self.calls}
        edges: dict[tuple[str, str], str] = {}
        for e in self.edges:
            edges.setdefault((e.src, e.label), e.dst)
        return blocks, calls, edges

    def block(self, node_id: str) -> SplitBlock | None:
        return self._index[0].get(node_id)

    def call(self, node_id: str) -> RemoteCallNode | None:
        return self._index[1].get(node_id)

    def successors(self, node_id: str) -> list[Edge]:
        return [e for e in self.edges if e.src == node_id]

    def edge(self, node_id: str, label: str) -> str:
        try:
            return self._index[2][(node_id, label)]
        except KeyError:
            raise KeyError(f"{node_id} has no {label!r} edge") from None

    @property
    def is_split(self) -> bool:
        return len(self.blocks) > 1 or bool(self.calls)


class SplitError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


# ---------------------------------------------------------------------------
# variable reads


def reads(expr: Expr) -> list[str]:
    """Variable names an expression reads, in evaluation order, self excluded."""
    out: list[str] = []
    _reads(expr, out)
    return out


def _reads(e: Expr, out: list[str]) -> None:
    if isinstance(e, Name):
        if e.id != "self":
            out.append(e.id)
    elif isinstance(e, Call):
        if isinstance(e.func, Attribute):
            _reads(e.func.value, out)
        for a in e.args:
            _reads(a, out)
    elif isinstance(e, Attribute):
        _reads(e.value, out)
    elif isinstance(e, Subscript):
        _reads(e.value, out)
        _reads(e.index, out)
    elif isinstance(e, (BinOp, Compare)):
        _reads(e.left, out)
        _reads(e.right, out)
    elif isinstance(e, UnaryOp):
        _reads(e.operand, out)
    elif isinstance(e, BoolOp):
        for v in e.values:
            _reads(v, out)
    elif isinstance(e, ListExpr):
        for v in e.elts:
            _reads(v, out)


def _stmt_uses_defs(stmt: Stmt) -> tuple[list[str], list[str]]:
    """(reads, writes) of a straight-line statement, in order."""
    if isinstance(stmt, Assign):
        uses = reads(stmt.value)
        if isinstance(stmt.target, Name):
            return uses, [stmt.target.id]
        return uses + reads(stmt.target), []
    if isinstance(stmt, AugAssign):
        if isinstance(stmt.target, Name):
            return [stmt.target.id] + reads(stmt.value), [stmt.target.id]
        return reads(stmt.target) + reads(stmt.value), []
    if isinstance(stmt, ExprStmt):
        return reads(stmt.value), []
    if isinstance(stmt, Pass):
        return [], []
    raise TypeError(f"not a straight-line statement: {stmt!r}")


def _terminator_uses(term: Terminator) -> list[str]:
    if isinstance(term, (Branch, LoopIterate)):
        return [term.slot]
    if isinstance(term, Return):
        return reads(term.value) if term.value is not None else []
    if isinstance(term, InvokeRemote):
        return [term.receiver, *term.arg_slots]
    return []


def block_uses_defs(block: SplitBlock) -> tuple[list[str], list[str]]:
    """Upward-exposed uses and definitions of a split block, in first-seen order."""
    uses: list[str] = []
    defs: list[str] = []
    defined: set[str] = set()
    for stmt in block.body:
        u, d = _stmt_uses_defs(stmt)
        for v in u:
            if v not in defined and v not in uses:
                uses.append(v)
        for v in d:
            defined.add(v)
            if v not in defs:
                defs.append(v)
    for v in _terminator_uses(block.terminator):
        if v not in defined and v not in uses:
            uses.append(v)
    return uses, defs


# ---------------------------------------------------------------------------
# hoisting remote calls into statements


def _has_remote(e: Expr) -> bool:
    return any(isinstance(x, Call) and x.kind == "remote" for x in iter_exprs(e))


def _atomic(e: Expr) -> bool:
    return isinstance(e, (Const, Name))


class _Fresh:
    def __init__(self, taken: set[str]):
        self.taken = set(taken)

    def __call__(self, base: str) -> str:
        name = base
        i = 1
        while name in self.taken:
            name = f"{base}_{i}"
            i += 1
        self.taken.add(name)
        return name


class _Hoister:
    """Rewrite statements so each remote call is a standalone :class:`CallRemote`.

    Operands evaluated before a remote call are pinned into temporaries so the
    original left-to-right evaluation order survives; ``and``/``or`` with a
    remote call past the first operand become an ``if`` to keep short-circuit
    behaviour.
    """

    def __init__(self, fresh: _Fresh, types: dict[str, TypeRef | None], return_types: dict[tuple[str, str], TypeRef | None]):
        self.fresh = fresh
        self.types = types
        self.return_types = return_types

    def temp(self, base: str, t: TypeRef | None = None) -> str:
        name = self.fresh(base)
        self.types[name] = t
        return name

    def body(self, stmts) -> tuple[Stmt, ...]:
        out: list[Stmt] = []
        for s in stmts:
            out.extend(self.stmt(s))
        return tuple(out)

    def stmt(self, s: Stmt) -> list[Stmt]:
        if isinstance(s, Assign):
            pre, v = self.expr(s.value)
            return pre + [Assign(s.target, v, s.annotation, s.span)]
        if isinstance(s, AugAssign):
            if not _has_remote(s.value):
                return [s]
            if isinstance(s.target, Name):
                pre, v = self.expr(s.value)
                return pre + [AugAssign(s.target, s.op, v, s.span)]
            old = self.temp("aug_tmp")
            pre, v = self.expr(s.value)
            return [Assign(Name(old), s.target, None, s.span), *pre, Assign(s.target, BinOp(Name(old), s.op, v), None, s.span)]
        if isinstance(s, ExprStmt):
            pre, v = self.expr(s.value)
            if pre and _atomic(v):
                return pre
            return pre + [ExprStmt(v, s.span)]
        if isinstance(s, ReturnStmt):
            if s.value is None:
                return [s]
            pre, v = self.expr(s.value)
            return pre + [ReturnStmt(v, s.span)]
        if isinstance(s, If):
            pre, t = self.expr(s.test)
            return pre + [If(t, self.body(s.body), self.body(s.orelse), s.span)]
        if isinstance(s, For):
            pre, it = self.expr(s.iter)
            return pre + [For(s.target, it, self.body(s.body), s.span)]
        if isinstance(s, While):
            body = self.body(s.body)
            if not _has_remote(s.test):
                return [While(s.test, body, s.span)]
            cond = self.temp("while_cond", BOOL)
            pre, t = self.expr(s.test)
            again, t2 = self.expr(s.test)
            return [
                *pre,
                Assign(Name(cond), t, None, s.span),
                While(Name(cond), body + tuple(again) + (Assign(Name(cond), t2, None, s.span),), s.span),
            ]
        return [s]

    def expr(self, e: Expr) -> tuple[list[Stmt], Expr]:
        if not _has_remote(e):
            return [], e
        if isinstance(e, Call):
            if isinstance(e.func, Attribute):
                pre, parts = self.seq([e.func.value, *e.args])
                recv, args = parts[0], tuple(parts[1:])
                if e.kind == "remote":
                    slot = self.temp(f"{e.func.attr}_return", self.return_types.get((e.target, e.func.attr)))
                    pre.append(CallRemote(slot, recv, e.target, e.func.attr, args, e.span))
                    return pre, Name(slot)
                return pre, Call(Attribute(recv, e.func.attr, e.func.span), args, e.kind, e.target, e.span)
            pre, args = self.seq(list(e.args))
            return pre, Call(e.func, tuple(args), e.kind, e.target, e.span)
        if isinstance(e, BinOp):
            pre, (l, r) = self.seq([e.left, e.right])
            return pre, BinOp(l, e.op, r, e.span)
        if isinstance(e, Compare):
            pre, (l, r) = self.seq([e.left, e.right])
            return pre, Compare(l, e.op, r, e.span)
        if isinstance(e, Subscript):
            pre, (v, i) = self.seq([e.value, e.index])
            return pre, Subscript(v, i, e.span)
        if isinstance(e, Attribute):
            pre, v = self.expr(e.value)
            return pre, Attribute(v, e.attr, e.span)
        if isinstance(e, UnaryOp):
            pre, v = self.expr(e.operand)
            return pre, UnaryOp(e.op, v, e.span)
        if isinstance(e, ListExpr):
            pre, elts = self.seq(list(e.elts))
            return pre, ListExpr(tuple(elts), e.span)
        if isinstance(e, BoolOp):
            first, rest = e.values[0], e.values[1:]
            if not any(_has_remote(v) for v in rest):
                pre, v0 = self.expr(first)
                return pre, BoolOp(e.op, (v0, *rest), e.span)
            tmp = self.temp("bool_tmp")
            pre, v0 = self.expr(first)
            tail = rest[0] if len(rest) == 1 else BoolOp(e.op, tuple(rest), e.span)
            pre_r, vr = self.expr(tail)
            test: Expr = Name(tmp) if e.op == "and" else UnaryOp("not", Name(tmp))
            return [*pre, Assign(Name(tmp), v0), If(test, (*pre_r, Assign(Name(tmp), vr)), ())], Name(tmp)
        raise TypeError(f"cannot hoist from {e!r}")  # pragma: no cover

    def seq(self, exprs: list[Expr]) -> tuple[list[Stmt], list[Expr]]:
        last = max((i for i, x in enumerate(exprs) if _has_remote(x)), default=-1)
        pre: list[Stmt] = []
        out: list[Expr] = []
        for i, x in enumerate(exprs):
            if i < last:
                p, v = self.expr(x)
                pre.extend(p)
                if not _atomic(v):
                    tmp = self.temp("tmp")
                    pre.append(Assign(Name(tmp), v))
                    v = Name(tmp)
                out.append(v)
            elif i == last:
                p, v = self.expr(x)
                pre.extend(p)
                out.append(v)
            else:
                out.append(x)
        return pre, out


# ---------------------------------------------------------------------------
# block construction


class _B:
    def __init__(self, order: int):
        self.order = order
        self.stmts: list[Stmt] = []
        self.term = None  # terminator with builder references
        self.id = ""


class _C:
    def __init__(self, order: int, call: CallRemote):
        self.order = order
        self.call = call
        self.id = ""


class _Builder:
    def __init__(self, name: str, fresh: _Fresh, types: dict[str, TypeRef | None]):
        self.name = name
        self.fresh = fresh
        self.types = types
        self.blocks: list[_B] = []
        self.calls: list[_C] = []
        self.edges: list[tuple[object, object, str]] = []

    def new_block(self) -> _B:
        b = _B(len(self.blocks))
        self.blocks.append(b)
        return b

    def temp(self, base: str, t: TypeRef | None) -> str:
        name = self.fresh(base)
        self.types[name] = t
        return name

    def statements(self, stmts, cur: _B | None) -> _B | None:
        for s in stmts:
            if cur is None:
                break
            if isinstance(s, CallRemote):
                cur = self.remote(s, cur)
            elif isinstance(s, If):
                cur = self.split_if(s, cur)
            elif isinstance(s, (For, While)):
                cur = self.split_loop(s, cur)
            elif isinstance(s, ReturnStmt):
                cur.term = Return(s.value)
                cur = None
            else:
                cur.stmts.append(s)
        return cur

    def remote(self, s: CallRemote, cur: _B) -> _B:
        if isinstance(s.receiver, Name):
            recv = s.receiver.id
        else:
            recv = self.temp(f"{s.method}_recv", TypeRef(s.class_name))
            cur.stmts.append(Assign(Name(recv), s.receiver, None, s.span))
        slots = []
        for i, a in enumerate(s.args):
            slot = self.temp(f"{s.method}_arg" if len(s.args) == 1 else f"{s.method}_arg_{i}", None)
            cur.stmts.append(Assign(Name(slot), a, None, s.span))
            slots.append(slot)
        node = _C(len(self.calls), s)
        self.calls.append(node)
        cont = self.new_block()
        cur.term = ("invoke", recv, s.class_name, s.method, tuple(slots), node)
        self.edges.append((cur, node, "call"))
        self.edges.append((node, cont, "return-to"))
        return cont

    def split_if(self, s: If, cur: _B) -> _B:
        cond = self.temp("if_cond", BOOL)
        cur.stmts.append(Assign(Name(cond), s.test, None, s.span))
        cur.term = ("branch", cond)
        t = self.new_block()
        f = self.new_block()
        k = self.new_block()
        self.edges.append((cur, t, "true"))
        self.edges.append((cur, f, "false"))
        for start in (t, f):
            end = self.statements(s.body if start is t else s.orelse, start)
            if end is not None:
                end.term = ("next", k)
                self.edges.append((end, k, "next"))
        return k

    def split_loop(self, s: For | While, cur: _B) -> _B:
        cond = self.temp("loop_cond", BOOL)
        if isinstance(s, For):
            elem = self.types.get(s.target)
            it = self.temp(f"{s.target}_iter", list_of(elem) if elem is not None else None)
            idx = self.temp(f"{s.target}_idx", INT)
            test: Expr = Compare(Name(idx), "<", Call(Name("len"), (Name(it),), "builtin", "len"))
            cur.stmts.append(Assign(Name(it), s.iter, None, s.span))
            cur.stmts.append(Assign(Name(idx), Const(0), None, s.span))
            head = [
                Assign(Name(s.target), Subscript(Name(it), Name(idx)), None, s.span),
                Assign(Name(idx), BinOp(Name(idx), "+", Const(1)), None, s.span),
            ]
        else:
            test = s.test
            head = []
        cur.stmts.append(Assign(Name(cond), test, None, s.span))
        cur.term = ("loop", cond)
        body = self.new_block()
        after = self.new_block()
        self.edges.append((cur, body, "iterate"))
        self.edges.append((cur, after, "done"))
        body.stmts.extend(head)
        end = self.statements(s.body, body)
        if end is not None:
            end.stmts.append(Assign(Name(cond), test, None, s.span))
            end.term = ("loop", cond)
            self.edges.append((end, body, "iterate"))
            self.edges.append((end, after, "done"))
        return after


def _return_types(classes: list[ClassDescriptor] | None) -> dict[tuple[str, str], TypeRef | None]:
    out: dict[tuple[str, str], TypeRef | None] = {}
    for c in classes or []:
        for m in c.methods:
            out[(c.name, m.name)] = m.return_type
    return out


def split_function(
    method: MethodDescriptor, classes: list[ClassDescriptor] | None = None
) -> tuple[list[SplitBlock], StateMachine]:
    """Cut ``method`` into continuation blocks and the machine connecting them.

    Methods without remote call sites come back as a single block holding the
    original body. ``classes`` is only used to type the remote return slots.
    Raises :class:`SplitError` if some block would read a variable with no
    defining predecessor.
    """
    name = method.name
    types: dict[str, TypeRef | None] = dict(method.locals)
    for p, t in method.params:
        types[p] = t
    if not method.remote_call_sites:
        block = SplitBlock(
            id=f"{name}_0",
            params=(("self", None), *((p, t) for p, t in method.params)),
            body=method.body,
            returns=(),
            terminator=Return(None),
        )
        machine = StateMachine(method.qualname, (block,), (), (), block.id, (block.id,))
        return [block], machine

    fresh = _Fresh(names_in(method.body) | set(method.param_names) | set(types) | {"self"})
    body = _Hoister(fresh, types, _return_types(classes)).body(method.body)
    builder = _Builder(name, fresh, types)
    entry = builder.new_block()
    end = builder.statements(body, entry)
    if end is not None:
        end.term = Return(None)
    machine = _freeze(method, builder, entry, types)
    diags = check_definitions(machine, method.param_names)
    if diags:
        raise SplitError(diags)
    return list(machine.blocks), machine


def _freeze(method: MethodDescriptor, b: _Builder, entry: _B, types) -> StateMachine:
    succ: dict[object, list[object]] = {}
    for src, dst, _ in b.edges:
        succ.setdefault(src, []).append(dst)
    seen: set[int] = set()
    stack: list[object] = [entry]
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        stack.extend(succ.get(n, []))
    blocks = [x for x in b.blocks if id(x) in seen]
    calls = [x for x in b.calls if id(x) in seen]
    for k, x in enumerate(blocks):
        x.id = f"{method.name}_{k}"
    for k, x in enumerate(calls):
        x.id = f"{method.name}_call_{k}"
    edges = tuple(Edge(s.id, d.id, lbl) for s, d, lbl in b.edges if id(s) in seen)
    call_nodes = tuple(RemoteCallNode(c.id, c.call.class_name, c.call.method, c.call.result) for c in calls)

    raw: list[SplitBlock] = []
    for x in blocks:
        t = x.term
        if isinstance(t, Return):
            term: Terminator = t
        elif t[0] == "invoke":
            _, recv, cls, meth, slots, node = t
            term = InvokeRemote(recv, cls, meth, slots, node.id)
        elif t[0] == "branch":
            term = Branch(t[1])
        elif t[0] == "loop":
            term = LoopIterate(t[1])
        else:
            term = FallThrough(t[1].id)
        raw.append(SplitBlock(x.id, (), tuple(x.stmts), (), term))
    exits = tuple(x.id for x in raw if isinstance(x.terminator, Return))
    machine = StateMachine(method.qualname, tuple(raw), call_nodes, edges, entry.id, exits)
    finished = []
    for blk in raw:
        params, returns = compute_block_interface(blk, machine)
        finished.append(
            SplitBlock(blk.id, tuple((p, types.get(p)) for p in params), blk.body, tuple(returns), blk.terminator)
        )
    return StateMachine(machine.method, tuple(finished), call_nodes, edges, entry.id, exits)


# ---------------------------------------------------------------------------
# interfaces


def _liveness(machine: StateMachine) -> dict[str, set[str]]:
    """live-in set for every node."""
    uses: dict[str, set[str]] = {}
    defs: dict[str, set[str]] = {}
    for blk in machine.blocks:
        u, d = block_uses_defs(blk)
        uses[blk.id] = set(u)
        defs[blk.id] = set(d)
    for c in machine.calls:
        uses[c.id] = set()
        defs[c.id] = {c.result}
    succ: dict[str, list[str]] = {n: [] for n in uses}
    for e in machine.edges:
        succ[e.src].append(e.dst)
    live_in: dict[str, set[str]] = {n: set() for n in uses}
    changed = True
    while changed:
        changed = False
        for n in reversed(list(uses)):
            out = set().union(*(live_in[s] for s in succ[n])) if succ[n] else set()
            new = uses[n] | (out - defs[n])
            if new != live_in[n]:
                live_in[n] = new
                changed = True
    return live_in


def compute_block_interface(block: SplitBlock, machine: StateMachine) -> tuple[list[str], list[str]]:
    """``(params, returns)`` of ``block`` within ``machine``.

    params: ``self``, then the block's upward-exposed variables in first-use
    order, then any remote return slots it reads. returns: variables the block
    defines that are live on one of its outgoing edges.
    """
    live_in = _liveness(machine)
    uses, defs = block_uses_defs(block)
    slots = {c.result for c in machine.calls}
    params = ["self"] + [u for u in uses if u not in slots] + [u for u in uses if u in slots]
    out: set[str] = set()
    for e in machine.successors(block.id):
        out |= live_in[e.dst]
    returns = [d for d in defs if d in out]
    return params, returns


def check_definitions(machine: StateMachine, method_params: list[str]) -> list[Diagnostic]:
    """Report block parameters that some path reaches without a definition."""
    preds: dict[str, list[str]] = {n: [] for n in machine.nodes}
    for e in machine.edges:
        preds[e.dst].append(e.src)
    defs: dict[str, set[str]] = {}
    for blk in machine.blocks:
        defs[blk.id] = set(block_uses_defs(blk)[1])
    for c in machine.calls:
        defs[c.id] = {c.result}
    universe = set().union(*defs.values()) | set(method_params)
    din: dict[str, set[str]] = {n: set(universe) for n in machine.nodes}
    din[machine.entry] = set(method_params)
    changed = True
    while changed:
        changed = False
        for n in machine.nodes:
            if n == machine.entry:
                continue
            ps = preds[n]
            new = set(universe)
            for p in ps:
                new &= din[p] | defs[p]
            if new != din[n]:
                din[n] = new
                changed = True
    diags = []
    for blk in machine.blocks:
        for p in blk.param_names:
            if p != "self" and p not in din[blk.id]:
                diags.append(D.error(D.UNDEFINED, f"possibly undefined variable {p!r} in block {blk.id}"))
    return diags


# ---------------------------------------------------------------------------
# debug output


def describe_terminator(term: Terminator) -> str:
    if isinstance(term, InvokeRemote):
        return f"invoke {term.receiver}.{term.method}({', '.join(term.arg_slots)}) [{term.class_name}]"
    if isinstance(term, Branch):
        return f"branch {term.slot}"
    if isinstance(term, LoopIterate):
        return f"iterate while {term.slot}"
    if isinstance(term, Return):
        return "return" + ("" if term.value is None else f" {format_expr(term.value)}")
    return f"goto {term.next}"


def format_block(block: SplitBlock) -> str:
    lines = [f"def {block.id}({', '.join(block.param_names)}):"]
    for s in block.body:
        lines.extend(format_stmt(s, 1))
    if block.returns:
        lines.append(f"    # returns {', '.join(block.returns)}")
    lines.append(f"    # {describe_terminator(block.terminator)}")
    return "\n".join(lines)


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\l")


def machine_to_dot(machine: StateMachine) -> str:
    lines = [f'digraph "{machine.method}" {{', "  rankdir=TB;", '  node [fontname="monospace"];']
    for b in machine.blocks:
        shape = "doublecircle" if b.id in machine.exits else "box"
        label = _dot_escape(format_block(b) + "\n")
        lines.append(f'  "{b.id}" [shape={shape}, label="{label}"];')
    for c in machine.calls:
        lines.append(f'  "{c.id}" [shape=ellipse, style=dashed, label="{c.class_name}.{c.method}\\n-> {c.result}"];')
    lines.append('  "__entry__" [shape=point];')
    lines.append(f'  "__entry__" -> "{machine.entry}";')
    for e in machine.edges:
        lines.append(f'  "{e.src}" -> "{e.dst}" [label="{e.label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
