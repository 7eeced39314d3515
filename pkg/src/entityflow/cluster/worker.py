"""Worker process: one PartitionExecutor consuming the partitions bound to it.

Inbox messages (tuples):

* ``("ev", partition, deliver_at_ns, published_ns, data)``: an ingress-topic record
* ``("batch", [record, ...])``: several ``ev`` records from one producer, in order
* ``("latency", kind, low_us, high_us)``: replace the hop latency model
* ``("stats",)`` / ``("snapshot",)``: control requests answered on the mailbox
* ``("stop",)``: exit after answering with final stats

Records become eligible at ``deliver_at``; a per-partition watermark keeps
consumption order equal to arrival order within a partition even when the
latency model draws a shorter delay for a later record.
"""

from __future__ import annotations

import heapq
import queue
import time
import traceback
from collections import Counter, deque
from typing import Any

from ..ir import deserialize_ir
from ..runtime.core import REPLY, PartitionExecutor, route_ingress
from ..values import encode
from .bus import EGRESS, INGRESS, LatencyModel, LatencySampler, operator_topic

_now = time.monotonic_ns
MAX_LOCAL_BACKLOG = 10_000  # stop pulling from the inbox while this many records wait locally


class _Worker:
    def __init__(self, wid: int, workers: int, partitions: int, ir_bytes: bytes, opts: dict, inboxes: list, mailbox: Any):
        self.wid = wid
        self.W = workers
        self.P = partitions
        self.ir = deserialize_ir(ir_bytes, validate=False)
        owned = [p for p in range(partitions) if p % workers == wid]
        self.executor = PartitionExecutor(
            self.ir,
            partitions,
            owned,
            key_lock=opts["key_lock"],
            strict_reentry=opts["strict_reentry"],
            name=f"w{wid}",
        )
        self.sampler = LatencySampler(LatencyModel(*opts["latency"]), stream=wid + 1)
        self.inboxes = inboxes
        self.inbox = inboxes[wid]
        self.mailbox = mailbox
        self.heap: list[tuple[int, int, int, int, bytes]] = []
        self.seq = 0
        self.watermark: dict[int, int] = {}
        self.outbox: dict[int, deque] = {w: deque() for w in range(workers) if w != wid}
        self.pending: dict[int, list] = {w: [] for w in self.outbox}  # records produced this round
        self.replies: list[bytes] = []
        self.topics: Counter = Counter()
        self.hops = 0
        self.delay_ns = 0
        self.running = True

    # -- inbox ----------------------------------------------------------------

    def _accept(self, msg: tuple) -> None:
        kind = msg[0]
        if kind == "ev":
            _, p, deliver_at, published, data = msg
            arrived = _now()
            at = max(deliver_at, self.watermark.get(p, 0))
            self.watermark[p] = at
            self.seq += 1
            heapq.heappush(self.heap, (at, self.seq, p, published, data, arrived))
        elif kind == "batch":
            for rec in msg[1]:
                self._accept(rec)
        elif kind == "latency":
            self.sampler.model = LatencyModel(*msg[1:])
        elif kind == "stats":
            self.mailbox.put(("stats", self.wid, self.stats()))
        elif kind == "snapshot":
            snap = {k: {f: encode(v) for f, v in fields.items()} for k, fields in self.executor.snapshot().items()}
            self.mailbox.put(("snapshot", self.wid, snap))
        elif kind == "stop":
            self.running = False
        else:  # pragma: no cover - protocol error
            raise ValueError(f"unknown inbox message {kind!r}")

    def _pull(self, timeout: float | None) -> None:
        """Block up to ``timeout`` for one message, then take whatever else is queued."""
        try:
            msg = self.inbox.get(timeout=timeout) if timeout is None or timeout > 0 else self.inbox.get_nowait()
        except queue.Empty:
            return
        self._accept(msg)
        while self.running and len(self.heap) < MAX_LOCAL_BACKLOG:
            try:
                msg = self.inbox.get_nowait()
            except queue.Empty:
                return
            self._accept(msg)

    # -- outbox ---------------------------------------------------------------

    def _send(self, dest: int, msg: tuple) -> None:
        self.pending[dest].append(msg)

    def _publish(self) -> None:
        """Hand this round's records to the destination inboxes, one batch per worker."""
        for dest, recs in self.pending.items():
            if not recs:
                continue
            msg = ("batch", recs) if len(recs) > 1 else recs[0]
            self.pending[dest] = []
            box = self.outbox[dest]
            if not box:
                try:
                    self.inboxes[dest].put_nowait(msg)
                    continue
                except queue.Full:
                    pass
            box.append(msg)
        if self.replies:
            self.mailbox.put(("replies", self.replies))
            self.replies = []

    def _flush(self) -> bool:
        """Retry buffered sends; True if anything is still buffered."""
        pending = False
        for dest, box in self.outbox.items():
            while box:
                try:
                    self.inboxes[dest].put_nowait(box[0])
                except queue.Full:
                    pending = True
                    break
                box.popleft()
        return pending

    # -- processing -----------------------------------------------------------

    def _process(self, item: tuple) -> None:
        at, _, _, published, data, arrived = item
        bus = max(at, arrived) - published
        now = _now()
        for route, ev, encoded in self.executor.process_bytes(data, bus):
            self.topics[EGRESS] += 1
            if route == REPLY:
                self.replies.append(encoded)
                continue
            _, p = route_ingress(self.ir, ev, self.P)
            self.topics[INGRESS] += 1
            self.topics[operator_topic(ev.class_name)] += 1
            delay = self.sampler.sample_ns()
            self.hops += 1
            self.delay_ns += delay
            msg = ("ev", p, now + delay, now, encoded)
            dest = p % self.W
            if dest == self.wid:
                self._accept(msg)
            else:
                self._send(dest, msg)

    def run(self) -> None:
        self.mailbox.put(("ready", self.wid))
        while self.running:
            buffered = self._flush()
            if self.heap:
                wait = (self.heap[0][0] - _now()) / 1e9
                timeout: float | None = max(0.0, wait)
            else:
                timeout = None
            if buffered:
                timeout = 0.0005 if timeout is None else min(timeout, 0.0005)
            self._pull(timeout)
            budget = 64
            while self.heap and self.heap[0][0] <= _now() and budget and self.running:
                self._process(heapq.heappop(self.heap))
                budget -= 1
            self._publish()
        for box in self.inboxes:  # undelivered records must not keep the process alive
            if hasattr(box, "cancel_join_thread"):
                box.cancel_join_thread()
        self.mailbox.put(("stats", self.wid, self.stats()))

    def stats(self) -> dict:
        return {
            "metrics": self.executor.metrics.to_json(),
            "topics": dict(self.topics),
            "busy": self.executor.busy,
            "backlog": len(self.heap) + sum(len(b) for b in self.outbox.values()),
            "hops": self.hops,
            "delay_ns": self.delay_ns,
            "partitions": sorted(self.executor.partitions),
            "cpu_s": time.thread_time(),
        }


def worker_main(wid: int, workers: int, partitions: int, ir_bytes: bytes, opts: dict, inboxes: list, mailbox: Any) -> None:
    try:
        _Worker(wid, workers, partitions, ir_bytes, opts, inboxes, mailbox).run()
    except BaseException:  # report and die; the client fails pending invocations
        mailbox.put(("error", wid, traceback.format_exc()))
