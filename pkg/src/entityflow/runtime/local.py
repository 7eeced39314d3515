"""In-process runtime: one executor, one FIFO standing in for the ingress topic.

Used for debugging, unit tests and the overhead experiment (paper §3,
"Local"). In the default synchronous mode :meth:`LocalRuntime.client_invoke`
pumps the queue on the calling thread until its reply arrives; with
``threaded=True`` a background thread drains the queue and any number of
client threads may submit concurrently.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from concurrent.futures import Future
from typing import Any

from ..ir import DataflowIR
from . import events as E
from .client import ClientBase, InvocationTimeout
from .core import REPLY, PartitionExecutor
from .events import Event
from .metrics import Metrics


class LocalRuntime(ClientBase):
    def __init__(
        self,
        ir: DataflowIR,
        partitions: int = 1,
        *,
        key_lock: bool = True,
        strict_reentry: bool = False,
        threaded: bool = False,
        step_limit: int | None = None,
    ):
        super().__init__(ir)
        kw = {} if step_limit is None else {"step_limit": step_limit}
        self.metrics = Metrics()
        self.executor = PartitionExecutor(
            ir, partitions, key_lock=key_lock, strict_reentry=strict_reentry, metrics=self.metrics, **kw
        )
        self._queue: deque[tuple[bytes, int]] = deque()
        self._cv = threading.Condition()
        self._threaded = threaded
        self._stopped = False
        self._thread: threading.Thread | None = None
        self.hops = 0
        if threaded:
            self._thread = threading.Thread(target=self._loop, name="entityflow-local", daemon=True)
            self._thread.start()

    # -- transport ------------------------------------------------------------

    def _send(self, ev: Event) -> None:
        self._publish(E.encode_event(ev))

    def _publish(self, data: bytes) -> None:
        with self._cv:
            self._queue.append((data, time.perf_counter_ns()))
            self._cv.notify()

    def step(self) -> bool:
        """Process one queued event; False if the queue was empty."""
        with self._cv:
            if not self._queue:
                return False
            data, t_pub = self._queue.popleft()
        bus = time.perf_counter_ns() - t_pub
        for route, ev, encoded in self.executor.process_bytes(data, bus):
            if route == REPLY:
                self.on_reply(ev)
            else:
                self.hops += 1
                self._publish(encoded)
        return True

    def run_until_idle(self) -> None:
        while self.step():
            pass

    def _loop(self) -> None:
        while True:
            with self._cv:
                while not self._queue and not self._stopped:
                    self._cv.wait()
                if self._stopped and not self._queue:
                    return
            self.step()

    def wait(self, fut: Future, timeout: float | None = 30.0) -> Any:
        if not self._threaded:
            deadline = None if timeout is None else time.monotonic() + timeout
            while not fut.done():
                if not self.step():
                    break
                if deadline is not None and time.monotonic() > deadline:
                    raise InvocationTimeout(f"no reply within {timeout} s")
        if not fut.done() and not self._threaded:
            raise InvocationTimeout("event queue drained without a reply")
        return super().wait(fut, timeout)

    def close(self) -> None:
        if self._thread is not None:
            with self._cv:
                self._stopped = True
                self._cv.notify()
            self._thread.join()
            self._thread = None

    def __enter__(self) -> "LocalRuntime":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- inspection -----------------------------------------------------------

    def snapshot(self) -> dict[tuple[str, Any], dict[str, Any]]:
        """Decoded state of every entity."""
        return self.executor.snapshot()

    def state(self, cls: str, key: Any) -> dict[str, Any] | None:
        return self.executor.store_for(key).get(cls, key)
