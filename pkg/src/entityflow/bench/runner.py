"""Open-loop workload driver for the hotel benchmark and the scaling experiment."""

from __future__ import annotations

import os
import random
import time
from concurrent.futures import Future
from dataclasses import dataclass, field
from typing import Any

from ..cluster import ClusterConfig, LatencyModel, start_cluster
from ..compiler import compile_text
from ..ir import DataflowIR
from ..runtime.client import ClientBase, InvocationError
from ..runtime.report import latency_csv
from ..values import canonical_json, encode
from .hotel import Request, WorkloadSpec, generate_requests, hotel_ir, populate

DEFAULT_WINDOW = 256  # max invocations in flight when the target rate outpaces the cluster


@dataclass
class BenchResult:
    report: dict[str, Any]
    replies: list[str] = field(default_factory=list)  # canonical reply per request, in request order
    series: list[tuple[int, str, float, bool]] = field(default_factory=list)  # (index, endpoint, seconds, ok)
    latency_csv: str = ""

    @property
    def reply_multiset(self) -> list[str]:
        return sorted(self.replies)


def _outcome(fut: Future) -> str:
    try:
        return canonical_json(encode(fut.result())).decode()
    except InvocationError as exc:
        return "error: " + str(exc)


def drive(
    client: ClientBase,
    requests: list[tuple[float, str, Any, str, list]],
    rate: float,
    window: int = DEFAULT_WINDOW,
) -> tuple[list[Future], dict[str, Any]]:
    """Submit ``(at, cls, key, method, args)`` requests open-loop; returns futures and pacing stats.

    Request ``i`` is due at ``start + at``. When more than ``window``
    invocations are outstanding the generator waits, so an unachievable rate
    shows up as lateness instead of unbounded queues.
    """
    futures: list[Future] = []
    late = 0
    start = time.perf_counter()
    for at, cls, key, method, args in requests:
        if rate > 0:
            delay = start + at - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            elif delay < -0.01:
                late += 1
        while client.in_flight >= window:
            time.sleep(0.0002)
        futures.append(client.submit(cls, key, method, args))
    submit_s = time.perf_counter() - start
    offered = len(requests) / submit_s if submit_s > 0 else float("inf")
    pacing = {
        "target_rps": rate,
        "offered_rps": offered,
        "late_requests": late,
        "rate_unachievable": bool(rate > 0 and offered < 0.95 * rate),
        "window": window,
    }
    return futures, pacing


def _hotel_calls(reqs: list[Request]) -> list[tuple[float, str, Any, str, list]]:
    return [(r.at, "User", r.key, r.endpoint, list(r.args)) for r in reqs]


def run_hotel(
    spec: WorkloadSpec,
    *,
    partitions: int = 1,
    workers: int = 1,
    key_lock: bool = True,
    strict_reentry: bool = False,
    latency: LatencyModel | None = None,
    window: int = DEFAULT_WINDOW,
    ir: DataflowIR | None = None,
    drain_timeout: float = 300.0,
    backend: str = "process",
) -> BenchResult:
    """Populate, run the seeded request sequence on a fresh cluster, drain and report."""
    ir = ir or hotel_ir()
    config = ClusterConfig(
        partitions=partitions, workers=workers, key_lock=key_lock, strict_reentry=strict_reentry, backend=backend
    )
    cluster = start_cluster(ir, config)
    try:
        pop = populate(cluster, spec)
        reqs = generate_requests(spec, pop)
        # measure only the workload: reset the client-side series after population
        _reset_client_series(cluster)
        if latency is not None:
            cluster.inject_latency(latency)
        futures, pacing = drive(cluster, _hotel_calls(reqs), spec.rate, window)
        cluster.wait_idle(drain_timeout)
    except BaseException:
        cluster.shutdown(drain=False, timeout=30)
        raise
    report = cluster.shutdown(drain=True, timeout=drain_timeout)
    replies = [_outcome(f) for f in futures]
    report["workload"] = {
        "seed": spec.seed,
        "requests": len(reqs),
        "mix": spec.mix,
        "hotels": spec.hotels,
        "users": spec.users,
        "population_invocations": pop_invocations(spec),
        **pacing,
    }
    counts: dict[str, int] = {}
    for r in reqs:
        counts[r.endpoint] = counts.get(r.endpoint, 0) + 1
    report["workload"]["endpoint_requests"] = counts
    return BenchResult(report, replies, sorted(cluster.series), latency_csv(cluster))


def pop_invocations(spec: WorkloadSpec) -> int:
    return spec.hotels + 3 * spec.cells + spec.users


def _reset_client_series(client: ClientBase) -> None:
    with client._lock:
        client.latencies = {}
        client.series = []
        client.t_first = None
        client.t_last = None


# -- scaling experiment -------------------------------------------------------

SPIN_SOURCE = '''
@stateflow
class Spinner:
    def __init__(self, sid: int):
        self.sid: int = sid
        self.total: int = 0

    def __key__(self):
        return self.sid

    def work(self, n: int) -> int:
        acc = 0
        i = 0
        while i < n:
            acc = (acc * 31 + i) % 1000003
            i += 1
        self.total += acc
        return acc
'''


def spin_ir() -> DataflowIR:
    return compile_text(SPIN_SOURCE)


def run_scaling(
    partitions: int,
    workers: int,
    *,
    requests: int = 2000,
    keys: int = 64,
    spin: int = 2000,
    window: int = 64,
    seed: int = 0,
) -> dict[str, Any]:
    """Saturating key-disjoint workload: many Spinner keys, CPU-bound ``work`` calls, no remote calls."""
    cluster = start_cluster(spin_ir(), ClusterConfig(partitions=partitions, workers=workers))
    try:
        for k in range(keys):
            cluster.client_invoke("Spinner", k, "__init__", [k])
        _reset_client_series(cluster)
        rng = random.Random(seed)
        calls = [(0.0, "Spinner", rng.randrange(keys), "work", [spin]) for _ in range(requests)]
        futures, pacing = drive(cluster, calls, 0.0, window)
        cluster.wait_idle(300)
    except BaseException:
        cluster.shutdown(drain=False, timeout=30)
        raise
    report = cluster.shutdown(drain=True)
    report["workload"] = {"requests": requests, "keys": keys, "spin": spin, **pacing}
    report["failed"] = sum(1 for f in futures if f.exception() is not None)
    return report


def scaling_experiment(**kw: Any) -> dict[str, Any]:
    """P=1/W=1 vs P=4/W=4 on the same host; ``speedup`` is the throughput ratio."""
    base = run_scaling(1, 1, **kw)
    wide = run_scaling(4, 4, **kw)
    ratio = wide["throughput_rps"] / base["throughput_rps"] if base["throughput_rps"] else 0.0
    return {
        "p1w1_rps": base["throughput_rps"],
        "p4w4_rps": wide["throughput_rps"],
        "speedup": ratio,
        "cpus": len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count(),
        "runs": {"p1w1": base, "p4w4": wide},
    }

