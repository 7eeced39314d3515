"""Operator execution: the part of the runtime every transport shares.

A :class:`PartitionExecutor` owns the entity state of a set of partitions
and processes events for them one at a time. It never talks to a bus itself:
:meth:`PartitionExecutor.process_bytes` takes one encoded event and returns
the encoded events it produced, each tagged by the egress router as a client
reply or a re-entry into the ingress topic.
"""

from __future__ import annotations

import itertools
import time
from collections import deque
from typing import Any

from ..ir import DataflowIR, ExecutionGraphInstance, Operator
from ..splitter import Branch, InvokeRemote, LoopIterate, Return, StateMachine
from ..values import EntityRef, conforms, decode, encode, fast_dumps, fast_loads, partition_of
from . import events as E
from .evaluator import DEFAULT_STEP_LIMIT, Entity, EvalError, Program
from .events import Event
from .graph import AwaitCall, Completed, ResolutionError, advance_execution_graph, block_visits, new_execution_graph
from .metrics import Metrics

REPLY = "reply"
REENTER = "reenter"

_now = time.perf_counter_ns


class RoutingError(Exception):
    pass


class Abort(Exception):
    """Raised inside event processing to turn the invocation into a Failure."""


class EntityStateStore:
    """(class, key) → serialized field map, for the partitions one executor owns."""

    def __init__(self) -> None:
        self.data: dict[tuple[str, Any], bytes] = {}

    def get(self, cls: str, key: Any) -> dict[str, Any] | None:
        raw = self.data.get((cls, key))
        if raw is None:
            return None
        return {k: decode(v) for k, v in fast_loads(raw).items()}

    def put(self, cls: str, key: Any, fields: dict[str, Any]) -> None:
        self.data[(cls, key)] = fast_dumps({k: encode(v) for k, v in fields.items()}, sort_keys=True)

    def __contains__(self, item: tuple[str, Any]) -> bool:
        return item in self.data

    def __len__(self) -> int:
        return len(self.data)

    def snapshot(self) -> dict[tuple[str, Any], dict[str, Any]]:
        return {k: self.get(*k) for k in self.data}


def route_ingress(ir: DataflowIR, ev: Event, partition_count: int) -> tuple[Operator, int]:
    """Operator and partition for an event: the class picks the operator, the key the partition."""
    op = ir.operator(ev.class_name)
    if op is None:
        raise RoutingError(f"unknown class {ev.class_name!r}")
    return op, partition_of(ev.key, partition_count)


def route_egress(ev: Event) -> str:
    """``reply`` for finished invocations, ``reenter`` for everything that continues in the dataflow."""
    if ev.type == E.RETURN:
        return REPLY if not ev.exec_graph else REENTER
    if ev.type == E.FAILURE:
        return REENTER if ev.meta.get("lock") else REPLY
    return REENTER


class PartitionExecutor:
    """Sequential executor for the partitions assigned to one worker."""

    def __init__(
        self,
        ir: DataflowIR,
        partition_count: int = 1,
        partitions: list[int] | None = None,
        *,
        key_lock: bool = True,
        strict_reentry: bool = False,
        name: str = "w0",
        metrics: Metrics | None = None,
        step_limit: int = DEFAULT_STEP_LIMIT,
    ):
        self.ir = ir
        self.program = Program(ir, step_limit)
        self.partition_count = partition_count
        self.partitions = set(range(partition_count) if partitions is None else partitions)
        self.stores: dict[int, EntityStateStore] = {p: EntityStateStore() for p in self.partitions}
        self.key_lock = key_lock
        self.strict_reentry = strict_reentry
        self.metrics = metrics or Metrics()
        self.locks: dict[tuple[str, Any], str] = {}
        self.deferred: dict[tuple[str, Any], deque[Event]] = {}
        self._released: list[tuple[str, Any]] = []
        self._ids = itertools.count()
        self._name = name
        self._stateful = frozenset(c for c, m in ir.classes.items() if m.stateful)
        self._sample = Metrics.new_sample()
        self._loaded: Entity | None = None
        self._stack: list[ExecutionGraphInstance] = []  # frames of the event being processed

    # -- transport-facing ---------------------------------------------------

    def process_bytes(self, data: bytes, bus_ns: int = 0) -> list[tuple[str, Event, bytes]]:
        """Decode, process and re-encode one event; returns ``(route, event, encoded)`` triples."""
        sample = self._sample = Metrics.new_sample()
        sample["bus"] = bus_ns
        t = _now()
        ev = E.decode_event(data)
        sample["decode"] = _now() - t
        outs = self.process(ev)
        t = _now()
        encoded = [(route_egress(o), o, E.encode_event(o)) for o in outs]
        sample["encode"] = _now() - t
        self.metrics.commit(sample)
        return encoded

    def process(self, ev: Event) -> list[Event]:
        """Process one ingress event plus any deferred events it unblocks."""
        self.metrics.counters["events_in"] += 1
        self.metrics.counters[f"in_{ev.type}"] += 1
        out: list[Event] = []
        if ev.is_root and self.key_lock and ev.type in (E.INVOKE, E.INIT):
            k = (ev.class_name, ev.key)
            if k in self.locks or self.deferred.get(k):
                self.deferred.setdefault(k, deque()).append(ev)
                self.metrics.counters["deferred"] += 1
                return out
        self.execute_block(ev, out)
        while self._released:
            k = self._released.pop()
            q = self.deferred.get(k)
            while q and k not in self.locks:
                self.execute_block(q.popleft(), out)
            if q is not None and not q:
                del self.deferred[k]
        return out

    @property
    def busy(self) -> bool:
        return bool(self.locks) or any(self.deferred.values())

    def store_for(self, key: Any) -> EntityStateStore:
        p = partition_of(key, self.partition_count)
        store = self.stores.get(p)
        if store is None:
            raise RoutingError(f"partition {p} is not owned by executor {self._name}")
        return store

    def snapshot(self) -> dict[tuple[str, Any], dict[str, Any]]:
        out: dict[tuple[str, Any], dict[str, Any]] = {}
        for store in self.stores.values():
            out.update(store.snapshot())
        return out

    # -- event processing ---------------------------------------------------

    def _new_id(self) -> str:
        return f"{self._name}-{next(self._ids)}"

    def _child(self, parent: Event, type_: str, cls: str, key: Any, method: str, **kw) -> Event:
        meta = dict(parent.meta)
        meta.pop("cont", None)
        if "visits" in meta:
            meta["visits"] = dict(meta["visits"])
        return Event(self._new_id(), type_, cls, key, method, reply_to=parent.reply_to, meta=meta, **kw)

    def execute_block(self, ev: Event, out: list[Event]) -> None:
        """Run whatever ``ev`` asks of its target entity, appending produced events to ``out``."""
        self.program.reset_budget()
        self._loaded = None
        self._stack = ev.exec_graph
        try:
            op = self.ir.operator(ev.class_name)
            if op is None:
                raise Abort(f"unknown class {ev.class_name!r}")
            if ev.type == E.INIT:
                self._init(op, ev, out)
            elif ev.type == E.INVOKE:
                self._invoke(op, ev, out)
            elif ev.type == E.RETURN:
                self._resume(op, ev, out)
            else:
                self._failure_arrived(ev, out)
        except (Abort, EvalError, ResolutionError) as exc:
            if self._loaded is not None:  # keep partial writes, as a sequential run would
                self._persist(self._loaded)
            self._fail(ev, str(exc), out)

    def _load(self, cls: str, key: Any) -> Entity:
        t = _now()
        fields = self.store_for(key).get(cls, key)
        t2 = _now()
        self._sample["state_load"] += t2 - t
        if fields is None:
            raise Abort(f"entity not found: {cls}<{key!r}>")
        meta = self.ir.classes[cls]
        missing = [f for f in meta.field_names if f not in fields]
        if missing:
            raise Abort(f"stored state of {cls}<{key!r}> lacks fields {missing}")
        me = self._loaded = Entity(meta, fields, key)
        self._sample["construct"] += _now() - t2
        return me

    def _persist(self, me: Entity) -> None:
        t = _now()
        self.store_for(me.key).put(me.meta.name, me.key, me.fields)
        self._sample["state_store"] += _now() - t

    def _init(self, op: Operator, ev: Event, out: list[Event]) -> None:
        store = self.store_for(ev.key)
        if (op.class_name, ev.key) in store:
            raise Abort(f"entity already exists: {op.class_name}<{ev.key!r}>")
        meta = self.ir.classes[op.class_name]
        args = self._positional(meta.method("__init__"), ev)
        t = _now()
        fields = self.program.construct(op.class_name, args)
        key = self.program.key_of(op.class_name, fields)
        self._sample["block_exec"] += _now() - t
        if key != ev.key:
            raise Abort(f"constructor produced key {key!r}, but the event was routed by key {ev.key!r}")
        me = Entity(meta, fields, key)
        self._persist(me)
        out.append(self._child(ev, E.RETURN, op.class_name, key, "__init__", payload=me.as_value(), exec_graph=ev.exec_graph))

    def _positional(self, method, ev: Event) -> list[Any]:
        names = method.param_names
        if set(ev.args) != set(names):
            raise Abort(f"{ev.class_name}.{method.name} expects arguments {list(names)}, got {sorted(ev.args)}")
        if ev.is_root:
            for name, t in method.params:
                if not conforms(ev.args[name], t, self._stateful):
                    raise Abort(f"argument {name!r} of {ev.class_name}.{method.name} must be {t}")
        return [ev.args[n] for n in names]

    def _invoke(self, op: Operator, ev: Event, out: list[Event]) -> None:
        k = (op.class_name, ev.key)
        if ev.meta.get("cont"):  # strict re-entry continuation of a machine at this entity
            frame = ev.exec_graph[-1]
            machine = self.ir.machines[frame.machine]
            me = self._load(*k)
            self._run_machine(machine, me, ev, ev.exec_graph, ev.method, dict(ev.args), out)
            return
        entry = op.entry(ev.method)
        if entry is None or ev.method in ("__init__",):
            raise Abort(f"unknown method {op.class_name}.{ev.method}")
        method = self.ir.classes[op.class_name].method(ev.method)
        args = self._positional(method, ev)
        me = self._load(*k)
        if entry.kind == "block":
            t = _now()
            value = self.program.run_method(me, ev.method, args)
            self._sample["block_exec"] += _now() - t
            self._persist(me)
            stack = ev.exec_graph
            owner = stack[-1].owner if stack else k
            out.append(self._child(ev, E.RETURN, owner[0], owner[1], ev.method, payload=value, exec_graph=stack))
            return
        if ev.is_root and self.key_lock:
            self.locks[k] = ev.event_id
            ev.meta["lock"] = [k[0], k[1]]
        machine = self.ir.machines[entry.machine]
        t = _now()
        frame, block_args = new_execution_graph(machine, k, dict(ev.args))
        stack = ev.exec_graph + [frame]
        self._sample["exec_graph"] += _now() - t
        self._run_machine(machine, me, ev, stack, machine.entry, block_args, out)

    def _resume(self, op: Operator, ev: Event, out: list[Event]) -> None:
        stack = ev.exec_graph
        frame = stack[-1]
        if frame.owner != (op.class_name, ev.key):
            raise Abort(f"return value delivered to {op.class_name}<{ev.key!r}> but frame belongs to {frame.owner}")
        machine = self.ir.machines[frame.machine]
        call = machine.call(frame.current)
        if call is None:
            raise Abort(f"frame of {frame.machine} is not waiting on a remote call")
        t = _now()
        step = advance_execution_graph(frame, machine, call.id, {call.result: ev.payload})
        self._sample["exec_graph"] += _now() - t
        me = self._load(op.class_name, ev.key)
        self._run_machine(machine, me, ev, stack, step.node, step.args, out)

    def _run_machine(
        self,
        machine: StateMachine,
        me: Entity,
        ev: Event,
        stack: list[ExecutionGraphInstance],
        node: str,
        args: dict[str, Any],
        out: list[Event],
    ) -> None:
        frame = stack[-1]
        self._stack = stack
        counters = self.metrics.block_exec
        sample = self._sample
        while True:
            block = machine.block(node)
            t = _now()
            env = dict(args)
            self.program.block_fn(block.body)(env, me)
            term = block.terminator
            outcome = payload = None
            if isinstance(term, (Branch, LoopIterate)):
                outcome = bool(env[term.slot])
            elif isinstance(term, Return) and term.value is not None:
                payload = self.program.expr_fn(term.value)(env, me)
            results = {v: env[v] for v in block.returns if v in env}
            t2 = _now()
            sample["block_exec"] += t2 - t
            step = advance_execution_graph(frame, machine, node, results, outcome, payload)
            counters[machine.method] += 1
            sample["exec_graph"] += _now() - t2
            if isinstance(step, Completed):
                self._persist(me)
                t = _now()
                stack = self._stack = stack[:-1]
                visits = ev.meta.setdefault("visits", {})
                visits[machine.method] = visits.get(machine.method, 0) + block_visits(frame, machine)
                sample["exec_graph"] += _now() - t
                if stack:
                    owner = stack[-1].owner
                    out.append(self._child(ev, E.RETURN, owner[0], owner[1], machine.method, payload=step.payload, exec_graph=stack))
                    return
                reply = self._child(ev, E.RETURN, me.meta.name, me.key, machine.method, payload=step.payload)
                self._release(reply)
                out.append(reply)
                return
            if isinstance(step, AwaitCall):
                self._persist(me)
                ref = env[term.receiver]
                if not isinstance(ref, EntityRef):
                    raise Abort(f"remote call {term.method}() on a non-entity value {ref!r}")
                callee = self.ir.classes.get(ref.cls)
                target = callee.method(term.method) if callee is not None else None
                if target is None:
                    raise Abort(f"unknown method {ref.cls}.{term.method}")
                call_args = dict(zip(target.param_names, (env[s] for s in term.arg_slots)))
                out.append(self._child(ev, E.INVOKE, ref.cls, ref.key, term.method, args=call_args, exec_graph=stack))
                return
            node, args = step.node, step.args
            if self.strict_reentry:
                self._persist(me)
                cont = self._child(ev, E.INVOKE, me.meta.name, me.key, node, args=args, exec_graph=stack)
                cont.meta["cont"] = True
                out.append(cont)
                return

    def _release(self, reply: Event) -> None:
        lock = reply.meta.pop("lock", None)
        if lock is None:
            return
        k = (lock[0], lock[1])
        if self.locks.get(k) == reply.meta.get("root"):
            del self.locks[k]
            self._released.append(k)

    def _fail(self, ev: Event, message: str, out: list[Event]) -> None:
        """Abort the invocation: count the visits so far, release the lock, reply with the error."""
        self.metrics.counters["failures_raised"] += 1
        meta = dict(ev.meta)
        meta.pop("cont", None)
        visits = meta.setdefault("visits", {})
        for frame in self._stack:
            machine = self.ir.machines.get(frame.machine)
            if machine is not None:
                visits[frame.machine] = visits.get(frame.machine, 0) + block_visits(frame, machine)
        failure = Event(self._new_id(), E.FAILURE, ev.class_name, ev.key, ev.method, payload=message, reply_to=ev.reply_to, meta=meta)
        lock = meta.get("lock")
        if lock is not None:
            k = (lock[0], lock[1])
            if partition_of(k[1], self.partition_count) in self.partitions and k in self.locks:
                self._release(failure)
            else:
                failure.class_name, failure.key = k
        out.append(failure)

    def _failure_arrived(self, ev: Event, out: list[Event]) -> None:
        reply = Event(self._new_id(), E.FAILURE, ev.class_name, ev.key, ev.method, payload=ev.payload, reply_to=ev.reply_to, meta=dict(ev.meta))
        self._release(reply)
        reply.meta.pop("lock", None)
        out.append(reply)
