"""Per-event stage timings and exactly-once counters."""

from __future__ import annotations

from collections import Counter
from typing import Any

import numpy as np

STAGES = ("decode", "state_load", "construct", "block_exec", "exec_graph", "state_store", "encode", "bus")
COMPILER_STAGES = ("construct", "exec_graph")


class Metrics:
    """Accumulates one timing sample (ns per stage) per processed event."""

    def __init__(self) -> None:
        self.samples: dict[str, list[int]] = {s: [] for s in STAGES}
        self.counters: Counter = Counter()
        self.block_exec: Counter = Counter()  # machine id -> block executions

    @staticmethod
    def new_sample() -> dict[str, int]:
        return dict.fromkeys(STAGES, 0)

    def commit(self, sample: dict[str, int]) -> None:
        for s in STAGES:
            self.samples[s].append(sample[s])

    @property
    def event_count(self) -> int:
        return len(self.samples["decode"])

    def to_json(self) -> dict[str, Any]:
        return {
            "samples": self.samples,
            "counters": dict(self.counters),
            "block_exec": dict(self.block_exec),
        }

    def merge_json(self, j: dict[str, Any]) -> None:
        for s in STAGES:
            self.samples[s].extend(j["samples"][s])
        self.counters.update(j["counters"])
        self.block_exec.update(j["block_exec"])

    def stage_summary(self) -> dict[str, dict[str, float]]:
        """Per-stage mean/p50/p99 in nanoseconds plus the total."""
        out: dict[str, dict[str, float]] = {}
        for s in STAGES:
            a = np.asarray(self.samples[s], dtype=np.float64)
            if a.size == 0:
                out[s] = {"mean_ns": 0.0, "p50_ns": 0.0, "p99_ns": 0.0, "total_ns": 0.0}
                continue
            out[s] = {
                "mean_ns": float(a.mean()),
                "p50_ns": float(np.percentile(a, 50)),
                "p99_ns": float(np.percentile(a, 99)),
                "total_ns": float(a.sum()),
            }
        return out

    def compiler_fraction(self, include_bus: bool = True) -> float:
        """Share of summed stage time spent in construction and exec-graph bookkeeping."""
        totals = {s: float(np.sum(self.samples[s])) for s in STAGES}
        denom = sum(v for s, v in totals.items() if include_bus or s != "bus")
        if denom == 0:
            return 0.0
        return sum(totals[s] for s in COMPILER_STAGES) / denom
