"""Events and their JSON wire format.

Wire fields follow the paper's listing: ``event_id``, ``_type``, ``class``,
``key``, ``method_or_block``, ``args``, ``payload``, ``exec_graph``,
``reply_to``, plus ``meta`` for bookkeeping (root invocation id, held key
lock, timestamps, visit counts). ``exec_graph`` is a stack of execution-graph
instances, innermost call last, or ``null`` outside split methods. Values
inside execution graphs are already in wire encoding (see ``graph``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from ..ir import ExecutionGraphInstance
from ..values import decode, encode, fast_dumps, fast_loads

INVOKE = "InvokeMethod"
INIT = "InitClass"
RETURN = "ReturnValue"
FAILURE = "Failure"
EVENT_TYPES = (INVOKE, INIT, RETURN, FAILURE)


@dataclass
class Event:
    event_id: str
    type: str
    class_name: str
    key: Any
    method: str  # method name or, for strict re-entry continuations, block id
    args: dict[str, Any] = field(default_factory=dict)
    payload: Any = None
    exec_graph: list[ExecutionGraphInstance] = field(default_factory=list)
    reply_to: str | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def is_root(self) -> bool:
        """A client submission, as opposed to an event produced inside the dataflow."""
        return self.meta.get("root") == self.event_id

    @property
    def is_reply(self) -> bool:
        return self.type in (RETURN, FAILURE)


def _frame_to_json(eg: ExecutionGraphInstance) -> dict:
    return {
        "machine": eg.machine,
        "owner": [eg.owner[0], eg.owner[1]],
        "current": eg.current,
        "log": [[node, stored] for node, stored in eg.visit_log],
        "args": eg.args,
    }


def _frame_from_json(j: dict) -> ExecutionGraphInstance:
    return ExecutionGraphInstance(
        machine=j["machine"],
        owner=(j["owner"][0], j["owner"][1]),
        current=j["current"],
        visit_log=[(node, stored) for node, stored in j["log"]],
        args=j["args"],
    )


def event_to_json(ev: Event) -> dict:
    return {
        "event_id": ev.event_id,
        "_type": ev.type,
        "class": ev.class_name,
        "key": ev.key,
        "method_or_block": ev.method,
        "args": {k: encode(v) for k, v in ev.args.items()},
        "payload": encode(ev.payload),
        "exec_graph": [_frame_to_json(f) for f in ev.exec_graph] or None,
        "reply_to": ev.reply_to,
        "meta": ev.meta,
    }


def event_from_json(j: dict) -> Event:
    if j.get("_type") not in EVENT_TYPES:
        raise ValueError(f"unknown event type {j.get('_type')!r}")
    return Event(
        event_id=j["event_id"],
        type=j["_type"],
        class_name=j["class"],
        key=j["key"],
        method=j["method_or_block"],
        args={k: decode(v) for k, v in j.get("args", {}).items()},
        payload=decode(j.get("payload")),
        exec_graph=[_frame_from_json(f) for f in j.get("exec_graph") or []],
        reply_to=j.get("reply_to"),
        meta=j.get("meta", {}),
    )


def encode_event(ev: Event) -> bytes:
    return fast_dumps(event_to_json(ev))


def decode_event(data: bytes | str) -> Event:
    return event_from_json(fast_loads(data))
