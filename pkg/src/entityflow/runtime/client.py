"""Client side of a runtime: event construction, futures and reply bookkeeping."""

from __future__ import annotations

import itertools
import threading
import time
from collections import Counter
from concurrent.futures import Future
from concurrent.futures import TimeoutError as FutureTimeout
from typing import Any

from ..ir import DataflowIR
from ..values import EntityRef
from . import events as E
from .events import Event


class InvocationError(Exception):
    """An invocation ended in a Failure event (or was rejected before submission)."""


class InvocationTimeout(InvocationError):
    pass


class ClientBase:
    """Builds root events and matches replies to futures. Subclasses implement ``_send``."""

    def __init__(self, ir: DataflowIR, name: str = "c"):
        self.ir = ir
        self._name = name
        self._ids = itertools.count()
        self._lock = threading.Lock()
        self._pending: dict[str, tuple[Future, int, str, int]] = {}
        self.handles: dict[tuple[str, Any], EntityRef] = {}
        self.submitted = 0
        self.replies = 0
        self.failures = 0
        self.visits: Counter = Counter()
        self.latencies: dict[str, list[float]] = {}  # method -> seconds
        self.series: list[tuple[int, str, float, bool]] = []  # (submit order, method, seconds, ok)
        self.t_first: int | None = None  # perf_counter_ns of the first submission
        self.t_last: int | None = None  # ... and of the latest reply

    # -- event construction ---------------------------------------------------

    def _resolve_handles(self, v: Any) -> Any:
        if isinstance(v, EntityRef):
            if v.frozen:
                return v
            return self.handles.get((v.cls, v.key), v)
        if isinstance(v, list):
            return [self._resolve_handles(x) for x in v]
        return v

    def make_event(self, cls: str, key: Any, method: str, args: list[Any] | dict[str, Any]) -> Event:
        meta = self.ir.classes.get(cls)
        if meta is None or not meta.stateful:
            raise InvocationError(f"unknown class {cls!r}")
        m = meta.method(method)
        if m is None:
            raise InvocationError(f"unknown method {cls}.{method}")
        names = m.param_names
        if isinstance(args, dict):
            arg_map = dict(args)
        else:
            if len(args) != len(names):
                raise InvocationError(f"{cls}.{method} takes {len(names)} argument(s), {len(args)} given")
            arg_map = dict(zip(names, args))
        arg_map = {k: self._resolve_handles(v) for k, v in arg_map.items()}
        eid = f"{self._name}-{next(self._ids)}"
        etype = E.INIT if method == "__init__" else E.INVOKE
        return Event(eid, etype, cls, key, method, arg_map, reply_to=eid, meta={"root": eid, "t0": time.monotonic_ns()})

    # -- submission -----------------------------------------------------------

    def _send(self, ev: Event) -> None:  # pragma: no cover - abstract
        raise NotImplementedError

    def submit(self, cls: str, key: Any, method: str, args: list[Any] | dict[str, Any]) -> Future:
        ev = self.make_event(cls, key, method, args)
        fut: Future = Future()
        with self._lock:
            now = time.perf_counter_ns()
            self._pending[ev.event_id] = (fut, now, method, self.submitted)
            if self.t_first is None:
                self.t_first = now
            self.submitted += 1
        self._send(ev)
        return fut

    def client_invoke(self, cls: str, key: Any, method: str, args: list[Any] | dict[str, Any] = (), timeout: float | None = 30.0) -> Any:
        """Invoke ``cls<key>.method(*args)`` and wait for the reply."""
        fut = self.submit(cls, key, method, list(args) if isinstance(args, tuple) else args)
        return self.wait(fut, timeout)

    def wait(self, fut: Future, timeout: float | None = 30.0) -> Any:
        try:
            return fut.result(timeout)
        except FutureTimeout:
            raise InvocationTimeout(f"no reply within {timeout} s") from None

    # -- replies --------------------------------------------------------------

    def on_reply(self, ev: Event) -> None:
        with self._lock:
            entry = self._pending.pop(ev.reply_to, None)
            for m, n in ev.meta.get("visits", {}).items():
                if n:
                    self.visits[m] += n
            if ev.type == E.FAILURE:
                self.failures += 1
            else:
                self.replies += 1
            now = self.t_last = time.perf_counter_ns()
            if entry is not None:
                _, t0, method, order = entry
                self.latencies.setdefault(method, []).append((now - t0) / 1e9)
                self.series.append((order, method, (now - t0) / 1e9, ev.type != E.FAILURE))
        if entry is None:
            return
        fut = entry[0]
        if ev.type == E.FAILURE:
            fut.set_exception(InvocationError(str(ev.payload)))
            return
        if isinstance(ev.payload, EntityRef) and ev.method == "__init__":
            with self._lock:
                self.handles[(ev.payload.cls, ev.payload.key)] = ev.payload
        fut.set_result(ev.payload)

    @property
    def in_flight(self) -> int:
        with self._lock:
            return len(self._pending)
