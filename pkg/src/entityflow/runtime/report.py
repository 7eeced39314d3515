"""Run reports: throughput, latency percentiles, stage breakdown and exactly-once counters."""

from __future__ import annotations

import csv
import io
from typing import Any

import numpy as np

from .client import ClientBase
from .metrics import Metrics


def percentiles_ms(seconds: list[float]) -> dict[str, float]:
    if not seconds:
        return {"count": 0, "p50": 0.0, "p99": 0.0, "mean": 0.0}
    a = np.asarray(seconds, dtype=np.float64) * 1000.0
    return {
        "count": int(a.size),
        "p50": float(np.percentile(a, 50)),
        "p99": float(np.percentile(a, 99)),
        "mean": float(a.mean()),
    }


def exactly_once(client: ClientBase, metrics: Metrics) -> dict[str, Any]:
    """Reply accounting plus the block-execution vs visit-log cross-check."""
    block_exec = {m: n for m, n in metrics.block_exec.items() if n}
    visits = {m: n for m, n in client.visits.items() if n}
    return {
        "submitted": client.submitted,
        "replies": client.replies,
        "failures": client.failures,
        "in_flight": client.in_flight,
        "block_exec": block_exec,
        "visit_log_blocks": visits,
        "replies_balanced": client.submitted == client.replies + client.failures,
        "blocks_balanced": block_exec == visits,
    }


def build_report(client: ClientBase, metrics: Metrics, topics: dict[str, Any], **extra: Any) -> dict[str, Any]:
    done = client.replies + client.failures
    elapsed = 0.0
    if client.t_first is not None and client.t_last is not None:
        elapsed = max(0.0, (client.t_last - client.t_first) / 1e9)
    all_latencies = [x for xs in client.latencies.values() for x in xs]
    report: dict[str, Any] = {
        "completed": done,
        "elapsed_s": elapsed,
        "throughput_rps": done / elapsed if elapsed > 0 else 0.0,
        "latency_ms": percentiles_ms(all_latencies),
        "endpoints": {m: percentiles_ms(xs) for m, xs in sorted(client.latencies.items())},
        "stages_ns": metrics.stage_summary(),
        "events_processed": metrics.event_count,
        "compiler_fraction": metrics.compiler_fraction(),
        "topics": topics,
        "counters": dict(metrics.counters),
        "exactly_once": exactly_once(client, metrics),
    }
    report.update(extra)
    return report


def latency_csv(client: ClientBase) -> str:
    """One row per completed invocation, in submission order."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["index", "endpoint", "latency_ms", "ok"])
    for order, method, secs, ok in sorted(client.series):
        w.writerow([order, method, f"{secs * 1000:.4f}", int(ok)])
    return buf.getvalue()
