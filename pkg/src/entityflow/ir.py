"""Dataflow intermediate representation.

One operator per stateful class; each operator's method table points either
at a single block (methods without remote calls) or at a state machine. Value
classes and the full method bodies travel in ``classes`` so a runtime can run
self calls, value-object methods and constructors without the source.

The IR serializes to canonical JSON (sorted keys, no whitespace) under the
schema version :data:`IR_VERSION`.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from typing import Any

from . import splitter as S
from .frontend import diagnostics as D
from .frontend import syntax as X
from .frontend.analysis import ClassDescriptor
from .frontend.diagnostics import Diagnostic
from .frontend.syntax import TypeRef
from .values import canonical_json

IR_VERSION = "entityflow-ir/1"


class IRError(Exception):
    def __init__(self, message: str, diagnostics: list[Diagnostic] | None = None):
        self.diagnostics = diagnostics or []
        super().__init__(message)


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class MethodMeta:
    name: str
    params: tuple[tuple[str, TypeRef | None], ...]
    return_type: TypeRef | None
    body: tuple[X.Stmt, ...]

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p for p, _ in self.params)


@dataclass(frozen=True)
class ClassMeta:
    name: str
    stateful: bool
    fields: tuple[tuple[str, TypeRef | None], ...]
    key_field: str | None
    immutable_fields: tuple[str, ...]
    methods: tuple[MethodMeta, ...]
    handle_fields: tuple[str, ...] = ()  # immutable fields a handle carries (read through handles)

    def method(self, name: str) -> MethodMeta | None:
        for m in self.methods:
            if m.name == name:
                return m
        return None

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(f for f, _ in self.fields)


@dataclass(frozen=True)
class MethodEntry:
    kind: str  # "block" | "machine"
    block: S.SplitBlock | None = None
    machine: str | None = None


@dataclass(frozen=True)
class Operator:
    class_name: str
    key_field: str
    key_type: TypeRef | None
    methods: tuple[tuple[str, MethodEntry], ...]
    state_schema: tuple[tuple[str, TypeRef | None], ...]

    def entry(self, method: str) -> MethodEntry | None:
        for name, e in self.methods:
            if name == method:
                return e
        return None


@dataclass(frozen=True)
class RouterSpec:
    kind: str  # "ingress" | "egress"
    targets: tuple[str, ...]


@dataclass(frozen=True)
class DataflowIR:
    operators: tuple[Operator, ...]
    machines: dict[str, S.StateMachine]
    classes: dict[str, ClassMeta]

    @property
    def ingress(self) -> RouterSpec:
        return RouterSpec("ingress", tuple(op.class_name for op in self.operators))

    @property
    def egress(self) -> RouterSpec:
        return RouterSpec("egress", tuple(op.class_name for op in self.operators))

    @property
    def class_meta(self) -> dict[str, ClassMeta]:
        return self.classes

    def operator(self, class_name: str) -> Operator | None:
        for op in self.operators:
            if op.class_name == class_name:
                return op
        return None


@dataclass
class ExecutionGraphInstance:
    """Traversal state of one split-method invocation, carried in events.

    ``visit_log`` values and ``args`` are stored in wire encoding
    (:func:`entityflow.values.encode`).
    """

    machine: str
    owner: tuple[str, Any]  # (class, key) of the entity running the machine
    current: str
    visit_log: list[tuple[str, dict[str, Any]]] = field(default_factory=list)
    args: dict[str, Any] = field(default_factory=dict)
    # decoded values by (log index, name); process-local, never serialized
    memo: dict[tuple[int, str], Any] = field(default_factory=dict, compare=False, repr=False)


# ---------------------------------------------------------------------------
# construction


def _class_meta(cls: ClassDescriptor) -> ClassMeta:
    return ClassMeta(
        name=cls.name,
        stateful=cls.is_stateful,
        fields=tuple(cls.state_fields),
        key_field=cls.key_field,
        immutable_fields=tuple(cls.immutable_fields),
        methods=tuple(MethodMeta(m.name, tuple(m.params), m.return_type, m.body) for m in cls.methods),
        handle_fields=tuple(cls.handle_fields),
    )


def build_dataflow(
    descriptors: list[ClassDescriptor],
    split_results: dict[str, tuple[list[S.SplitBlock], S.StateMachine]],
) -> DataflowIR:
    """Assemble validated descriptors and split results into an IR.

    ``split_results`` maps ``Class.method`` to the splitter's output for every
    method of every stateful class. Raises :class:`IRError` on duplicate
    operators or dangling remote calls.
    """
    operators: list[Operator] = []
    machines: dict[str, S.StateMachine] = {}
    seen: set[str] = set()
    for cls in descriptors:
        if not cls.is_stateful:
            continue
        if cls.name in seen:
            raise IRError(f"duplicate operator {cls.name!r}")
        seen.add(cls.name)
        table: list[tuple[str, MethodEntry]] = []
        for m in cls.methods:
            blocks, machine = split_results[m.qualname]
            if machine.is_split:
                machines[m.qualname] = machine
                table.append((m.name, MethodEntry("machine", machine=m.qualname)))
            else:
                table.append((m.name, MethodEntry("block", block=blocks[0])))
        key_field = cls.key_field or ""
        operators.append(Operator(cls.name, key_field, cls.field_type(key_field), tuple(table), tuple(cls.state_fields)))
    ir = DataflowIR(tuple(operators), machines, {c.name: _class_meta(c) for c in descriptors})
    errors = [d for d in validate_ir(ir) if d.is_error]
    if errors:
        raise IRError(str(errors[0]).split(": ", 1)[-1], errors)
    return ir


# ---------------------------------------------------------------------------
# validation


def _ir_error(message: str) -> Diagnostic:
    return D.error(D.IR, message)


_TERMINATOR_LABELS = {
    S.InvokeRemote: {"call"},
    S.Branch: {"true", "false"},
    S.LoopIterate: {"iterate", "done"},
    S.FallThrough: {"next"},
    S.Return: set(),
}


def _validate_machine(mid: str, m: S.StateMachine, ir: DataflowIR) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    nodes = m.nodes
    if len(set(nodes)) != len(nodes):
        out.append(_ir_error(f"machine {mid}: duplicate node ids"))
    node_set = set(nodes)
    if m.entry not in node_set:
        return out + [_ir_error(f"machine {mid}: entry {m.entry!r} is not a node")]
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    pred: dict[str, list[str]] = {n: [] for n in nodes}
    for e in m.edges:
        if e.src not in node_set or e.dst not in node_set:
            out.append(_ir_error(f"machine {mid}: edge {e.src}->{e.dst} references a missing node"))
            continue
        succ[e.src].append(e.dst)
        pred[e.dst].append(e.src)
    if pred.get(m.entry):
        out.append(_ir_error(f"machine {mid}: entry {m.entry} has incoming edges"))
    for b in m.blocks:
        labels = sorted(e.label for e in m.successors(b.id))
        want = sorted(_TERMINATOR_LABELS[type(b.terminator)])
        if labels != want:
            out.append(_ir_error(f"machine {mid}: block {b.id} edges {labels} do not match its terminator"))
        if isinstance(b.terminator, S.Return) and b.id not in m.exits:
            out.append(_ir_error(f"machine {mid}: returning block {b.id} is not an exit"))
    for c in m.calls:
        labels = [e.label for e in m.successors(c.id)]
        if labels != ["return-to"]:
            out.append(_ir_error(f"machine {mid}: remote call {c.id} needs exactly one return-to edge"))
        op = ir.operator(c.class_name)
        if op is None or op.entry(c.method) is None:
            out.append(_ir_error(f"dangling remote call {c.id} in {mid}: {c.class_name}.{c.method} does not exist"))
    reach = {m.entry}
    stack = [m.entry]
    while stack:
        for s in succ[stack.pop()]:
            if s not in reach:
                reach.add(s)
                stack.append(s)
    for n in nodes:
        if n not in reach:
            out.append(_ir_error(f"machine {mid}: unreachable block {n}"))
    back = set(x for x in m.exits if x in node_set)
    stack = list(back)
    while stack:
        for p in pred[stack.pop()]:
            if p not in back:
                back.add(p)
                stack.append(p)
    for n in nodes:
        if n in reach and n not in back:
            out.append(_ir_error(f"machine {mid}: block {n} cannot reach an exit"))
    return out


def validate_ir(ir: DataflowIR) -> list[Diagnostic]:
    """Check IR invariants and machine well-formedness; never raises."""
    out: list[Diagnostic] = []
    if not ir.operators:
        out.append(_ir_error("no operators"))
    names = [op.class_name for op in ir.operators]
    for n in sorted({n for n in names if names.count(n) > 1}):
        out.append(_ir_error(f"duplicate operator {n!r}"))
    stateful = sorted(n for n, c in ir.classes.items() if c.stateful)
    if sorted(set(names)) != stateful:
        out.append(_ir_error(f"operators {sorted(set(names))} do not match stateful classes {stateful}"))
    for op in ir.operators:
        if op.key_field not in [f for f, _ in op.state_schema]:
            out.append(_ir_error(f"operator {op.class_name}: key not in state schema ({op.key_field!r})"))
        for name, entry in op.methods:
            if entry.kind == "machine" and entry.machine not in ir.machines:
                out.append(_ir_error(f"operator {op.class_name}: method {name} references missing machine {entry.machine!r}"))
            if entry.kind == "block" and entry.block is None:
                out.append(_ir_error(f"operator {op.class_name}: method {name} has no block"))
    for mid, m in sorted(ir.machines.items()):
        out.extend(_validate_machine(mid, m, ir))
    return out


# ---------------------------------------------------------------------------
# serialization

_NODE_TYPES: dict[str, type] = {}
for _mod, _prefix in ((X, ""), (S, "T.")):
    for _name in dir(_mod):
        _obj = getattr(_mod, _name)
        if dataclasses.is_dataclass(_obj) and isinstance(_obj, type) and _obj.__module__ == _mod.__name__:
            _NODE_TYPES[_prefix + _obj.__name__] = _obj
for _cls in (MethodMeta, ClassMeta, MethodEntry, Operator):
    _NODE_TYPES[_cls.__name__] = _cls
_TAG_OF = {v: k for k, v in _NODE_TYPES.items()}

_TYPE_TOKEN = re.compile(r"\s*([A-Za-z_][A-Za-z_0-9]*|\[|\]|,)")


def parse_type(text: str) -> TypeRef:
    tokens = _TYPE_TOKEN.findall(text)
    pos = 0

    def one() -> TypeRef:
        nonlocal pos
        name = tokens[pos]
        pos += 1
        args: list[TypeRef] = []
        if pos < len(tokens) and tokens[pos] == "[":
            pos += 1
            args.append(one())
            while tokens[pos] == ",":
                pos += 1
                args.append(one())
            pos += 1  # ]
        return TypeRef(name, tuple(args))

    return one()


def _enc(obj: Any) -> Any:
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    if isinstance(obj, TypeRef):
        return {"type": str(obj)}
    if isinstance(obj, X.Span):
        return [obj.file, obj.line, obj.col]
    if isinstance(obj, (tuple, list)):
        return [_enc(x) for x in obj]
    if dataclasses.is_dataclass(obj):
        out = {"_t": _TAG_OF[type(obj)]}
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if f.name == "span" and v is None:
                continue
            out[f.name] = _enc(v)
        return out
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dec(j: Any) -> Any:
    if isinstance(j, list):
        return tuple(_dec(x) for x in j)
    if isinstance(j, dict):
        if "type" in j and len(j) == 1:
            return parse_type(j["type"])
        tag = j.get("_t")
        cls = _NODE_TYPES.get(tag)
        if cls is None:
            raise IRError(f"malformed document: unknown node tag {tag!r}")
        kwargs = {}
        for k, v in j.items():
            if k == "_t":
                continue
            kwargs[k] = X.Span(*v) if k == "span" else _dec(v)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise IRError(f"malformed document: bad {tag} node ({exc})") from None
    return j


def ir_to_json(ir: DataflowIR) -> dict:
    return {
        "version": IR_VERSION,
        "operators": [_enc(op) for op in ir.operators],
        "machines": {k: _enc(m) for k, m in ir.machines.items()},
        "classes": {k: _enc(c) for k, c in ir.classes.items()},
    }


def serialize_ir(ir: DataflowIR) -> bytes:
    return canonical_json(ir_to_json(ir))


def deserialize_ir(data: bytes | str, validate: bool = True) -> DataflowIR:
    try:
        doc = json.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise IRError(f"malformed document: {exc}") from None
    if not isinstance(doc, dict):
        raise IRError("malformed document: top level is not an object")
    version = doc.get("version")
    if version != IR_VERSION:
        raise IRError(f"schema version mismatch: expected {IR_VERSION!r}, got {version!r}")
    missing = [k for k in ("operators", "machines", "classes") if k not in doc]
    if missing:
        raise IRError(f"malformed document: missing {', '.join(missing)}")
    ir = DataflowIR(
        tuple(_dec(op) for op in doc["operators"]),
        {k: _dec(m) for k, m in doc["machines"].items()},
        {k: _dec(c) for k, c in doc["classes"].items()},
    )
    if validate:
        errors = [d for d in validate_ir(ir) if d.is_error]
        if errors:
            raise IRError("; ".join(d.message for d in errors), errors)
    return ir


# ---------------------------------------------------------------------------
# DOT export


def dataflow_to_dot(ir: DataflowIR) -> str:
    lines = ["digraph dataflow {", "  rankdir=LR;", '  node [fontname="sans-serif"];']
    lines.append('  "client" [shape=plaintext];')
    lines.append('  "ingress" [shape=diamond, label="ingress router\\n(keyBy class, key)"];')
    lines.append('  "egress" [shape=diamond, label="egress router"];')
    lines.append('  "client" -> "ingress";')
    for op in ir.operators:
        methods = "\\n".join(
            f"{name} [{entry.kind}]" for name, entry in op.methods if not name.startswith("__") or name == "__init__"
        )
        lines.append(f'  "{op.class_name}" [shape=box3d, label="{op.class_name}\\nkey: {op.key_field}\\n{methods}"];')
        lines.append(f'  "ingress" -> "{op.class_name}";')
        lines.append(f'  "{op.class_name}" -> "egress";')
    lines.append('  "egress" -> "client" [label="reply"];')
    lines.append('  "egress" -> "ingress" [style=dashed, label="re-entry topic", constraint=false];')
    lines.append("}")
    return "\n".join(lines) + "\n"
