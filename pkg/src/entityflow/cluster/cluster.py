"""Simulated partitioned dataflow cluster (paper §3, "Dataflow" target).

Shape: client → ingress topic (keyBy) → operator partitions on W worker
processes → egress → either the client mailbox (replies) or back onto the
ingress topic (re-entry). Every topic has P partitions; partition ``p`` is
consumed only by worker ``p % W``. The ingress topic is physically one
bounded ``multiprocessing.Queue`` per worker carrying the records of the
partitions that worker owns; operator and egress topics are logical, counted
per record.
"""

from __future__ import annotations

import multiprocessing as mp
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Any

from ..ir import DataflowIR, serialize_ir
from ..runtime import events as E
from ..runtime.client import ClientBase, InvocationError
from ..runtime.core import RoutingError, route_ingress
from ..runtime.events import Event
from ..runtime.metrics import Metrics
from ..runtime.report import build_report
from ..values import decode
from .bus import EGRESS, INGRESS, LatencyModel, LatencySampler, Topic, operator_topic
from .worker import worker_main

_now = time.monotonic_ns


class ClusterError(Exception):
    pass


class DrainTimeout(ClusterError):
    pass


@dataclass
class ClusterConfig:
    partitions: int = 1
    workers: int = 1
    latency: LatencyModel = field(default_factory=LatencyModel.none)
    key_lock: bool = True
    strict_reentry: bool = False
    queue_size: int = 10_000  # per worker inbox; publishers block (client) or buffer (workers) when full
    start_method: str = "spawn"
    backend: str = "process"  # "process": one OS process per worker; "thread": all workers in this process

    def __post_init__(self) -> None:
        if self.partitions < 1:
            raise ValueError("partition count must be >= 1")
        if self.workers < 1:
            raise ValueError("worker count must be >= 1")
        if self.workers > self.partitions:
            raise ValueError(f"{self.workers} workers for {self.partitions} partitions would leave workers without partitions")
        if self.backend not in ("process", "thread"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.queue_size < 1:
            raise ValueError("queue size must be >= 1")

    def binding(self) -> dict[int, int]:
        """partition → worker; static for the run."""
        return {p: p % self.workers for p in range(self.partitions)}


class Cluster(ClientBase):
    """A running cluster; also the client handle (``submit``/``client_invoke``)."""

    def __init__(self, ir: DataflowIR, config: ClusterConfig):
        super().__init__(ir, name="c")
        self.config = config
        self.topics = [Topic(INGRESS, config.partitions)]
        self.topics += [Topic(operator_topic(op.class_name), config.partitions) for op in ir.operators]
        self.topics.append(Topic(EGRESS, config.partitions))
        if config.backend == "process":
            self._ctx = mp.get_context(config.start_method)
            self._inboxes = [self._ctx.Queue(maxsize=config.queue_size) for _ in range(config.workers)]
            self._mailbox = self._ctx.Queue()
        else:
            self._inboxes = [queue.Queue(maxsize=config.queue_size) for _ in range(config.workers)]
            self._mailbox = queue.Queue()
        self._sampler = LatencySampler(config.latency, stream=0)
        self._send_lock = threading.Lock()
        self._client_topics: dict[str, int] = {}
        self._control: queue.Queue = queue.Queue()
        self._errors: list[str] = []
        self._procs: list[Any] = []
        self._dispatcher: threading.Thread | None = None
        self._closed = False
        self._final: dict[int, dict] = {}

    # -- lifecycle --------------------------------------------------------------

    def _start(self) -> None:
        cfg = self.config
        ir_bytes = serialize_ir(self.ir)
        m = cfg.latency
        opts = {"key_lock": cfg.key_lock, "strict_reentry": cfg.strict_reentry, "latency": (m.kind, m.low_us, m.high_us)}
        for wid in range(cfg.workers):
            args = (wid, cfg.workers, cfg.partitions, ir_bytes, opts, self._inboxes, self._mailbox)
            if cfg.backend == "process":
                proc = self._ctx.Process(target=worker_main, args=args, name=f"entityflow-w{wid}", daemon=True)
            else:
                proc = threading.Thread(target=worker_main, args=args, name=f"entityflow-w{wid}", daemon=True)
            proc.start()
            self._procs.append(proc)
        ready = 0
        deadline = time.monotonic() + 60
        while ready < cfg.workers:
            try:
                msg = self._mailbox.get(timeout=max(0.0, deadline - time.monotonic()))
            except queue.Empty:
                self._terminate()
                raise ClusterError("workers did not start within 60 s") from None
            if msg[0] == "error":
                self._terminate()
                raise ClusterError(f"worker {msg[1]} failed to start:\n{msg[2]}")
            ready += msg[0] == "ready"
        self._dispatcher = threading.Thread(target=self._dispatch, name="entityflow-replies", daemon=True)
        self._dispatcher.start()

    def _dispatch(self) -> None:
        while True:
            msg = self._mailbox.get()
            kind = msg[0]
            if kind == "replies":
                for data in msg[1]:
                    self.on_reply(E.decode_event(data))
            elif kind == "error":
                self._errors.append(f"worker {msg[1]}: {msg[2]}")
                self._fail_pending(f"worker {msg[1]} crashed")
                self._control.put(msg)
            elif kind == "exit":
                return
            else:
                self._control.put(msg)

    def _fail_pending(self, reason: str) -> None:
        with self._lock:
            pending = list(self._pending.values())
            self._pending.clear()
        for fut, *_ in pending:
            if not fut.done():
                fut.set_exception(InvocationError(reason))

    def _terminate(self) -> None:
        for p in self._procs:
            if p.is_alive() and hasattr(p, "terminate"):
                p.terminate()
        for p in self._procs:
            p.join(timeout=5)

    # -- client transport -------------------------------------------------------

    def _send(self, ev: Event) -> None:
        if self._closed:
            raise ClusterError("cluster is shut down")
        if self._errors:
            raise ClusterError(self._errors[0])
        try:
            _, p = route_ingress(self.ir, ev, self.config.partitions)
        except RoutingError as exc:
            raise InvocationError(str(exc)) from None
        data = E.encode_event(ev)
        with self._send_lock:
            now = _now()
            msg = ("ev", p, now + self._sampler.sample_ns(), now, data)
            for t in (INGRESS, operator_topic(ev.class_name)):
                self._client_topics[t] = self._client_topics.get(t, 0) + 1
        self._inboxes[p % self.config.workers].put(msg)  # blocks when the partition queue is full

    # -- control ------------------------------------------------------------------

    def inject_latency(self, model: LatencyModel) -> None:
        """Subsequent hops (including ones already queued but not yet published) use ``model``."""
        with self._send_lock:
            self._sampler.model = model
            self.config.latency = model
        for box in self._inboxes:
            box.put(("latency", model.kind, model.low_us, model.high_us))

    def _broadcast(self, request: tuple, kind: str, timeout: float) -> dict[int, Any]:
        for box in self._inboxes:
            box.put(request)
        out: dict[int, Any] = {}
        deadline = time.monotonic() + timeout
        while len(out) < self.config.workers:
            try:
                msg = self._control.get(timeout=max(0.0, deadline - time.monotonic()))
            except queue.Empty:
                raise ClusterError(f"no {kind} answer from all workers within {timeout} s") from None
            if msg[0] == "error":
                raise ClusterError(msg[2])
            if msg[0] == kind:
                out[msg[1]] = msg[2]
        return out

    def wait_idle(self, timeout: float = 60.0) -> None:
        """Block until every submitted invocation has been answered."""
        deadline = time.monotonic() + timeout
        while self.in_flight:
            if self._errors:
                raise ClusterError(self._errors[0])
            if time.monotonic() > deadline:
                raise DrainTimeout(f"{self.in_flight} invocation(s) still in flight after {timeout} s")
            time.sleep(0.002)

    def snapshot(self, timeout: float = 60.0) -> dict[tuple[str, Any], dict[str, Any]]:
        out: dict[tuple[str, Any], dict[str, Any]] = {}
        for snap in self._broadcast(("snapshot",), "snapshot", timeout).values():
            for k, fields in snap.items():
                out[k] = {f: decode(v) for f, v in fields.items()}
        return out

    def stats(self, timeout: float = 60.0) -> dict[int, dict]:
        return self._broadcast(("stats",), "stats", timeout)

    def shutdown(self, drain: bool = True, timeout: float = 120.0) -> dict[str, Any]:
        """Stop the workers and return the run report.

        With ``drain`` the call first waits for every in-flight invocation
        (raising :class:`DrainTimeout`); without it, whatever is still queued
        is reported as undelivered.
        """
        if self._closed:
            raise ClusterError("cluster already shut down")
        drained = False
        try:
            if drain:
                self.wait_idle(timeout)
                drained = True
            undelivered = self.in_flight
            final = self._broadcast(("stop",), "stats", timeout)
        finally:
            self._closed = True
            self._mailbox.put(("exit",))
            if self._dispatcher is not None:
                self._dispatcher.join(timeout=5)
            for p in self._procs:
                p.join(timeout=5)
            self._terminate()
            self._fail_pending("cluster shut down before the reply arrived")
        return self._report(final, drained, undelivered)

    def _report(self, final: dict[int, dict], drained: bool, undelivered: int) -> dict[str, Any]:
        metrics = Metrics()
        topic_counts: dict[str, int] = dict(self._client_topics)
        hops = delay = backlog = 0
        cpu = {str(w): st["cpu_s"] for w, st in sorted(final.items())}
        busy = False
        for st in final.values():
            metrics.merge_json(st["metrics"])
            for t, n in st["topics"].items():
                topic_counts[t] = topic_counts.get(t, 0) + n
            hops += st["hops"]
            delay += st["delay_ns"]
            backlog += st["backlog"]
            busy = busy or st["busy"]
        topics = {t.name: {"partitions": t.partitions, "records": topic_counts.get(t.name, 0)} for t in self.topics}
        m = self.config.latency
        return build_report(
            self,
            metrics,
            topics,
            partitions=self.config.partitions,
            workers=self.config.workers,
            key_lock=self.config.key_lock,
            strict_reentry=self.config.strict_reentry,
            latency_model={"kind": m.kind, "low_us": m.low_us, "high_us": m.high_us},
            bus={"worker_hops": hops, "mean_injected_us": delay / hops / 1000 if hops else 0.0},
            drained=drained,
            undelivered=undelivered + backlog,
            locks_held=busy,
            worker_cpu_s=cpu,
            binding={str(p): w for p, w in self.config.binding().items()},
        )

    def __enter__(self) -> "Cluster":
        return self

    def __exit__(self, *exc) -> None:
        if not self._closed:
            self.shutdown(drain=exc[0] is None)


def start_cluster(ir: DataflowIR, config: ClusterConfig | None = None) -> Cluster:
    cluster = Cluster(ir, config or ClusterConfig())
    cluster._start()
    return cluster


def inject_latency(handle: Cluster, model: LatencyModel) -> None:
    handle.inject_latency(model)


def shutdown(handle: Cluster, drain: bool = True, timeout: float = 120.0) -> dict[str, Any]:
    return handle.shutdown(drain, timeout)


__all__ = [
    "Cluster",
    "ClusterConfig",
    "ClusterError",
    "DrainTimeout",
    "inject_latency",
    "shutdown",
    "start_cluster",
]
