"""§4 overhead experiment: how much per-event time the compiler is responsible for.

A synthetic ``Account`` entity carries a ``history`` list of integers sized so
the entity's serialized state is the requested number of kilobytes (structured
state, like a real entity's, rather than one opaque string).
The workload mixes a plain method (``deposit``) with a split one
(``transfer``, one remote call), so every compiler-attributable stage is
exercised: entity construction on each event and execution-graph
bookkeeping on the split invocations.
"""

from __future__ import annotations

import random
import time
from typing import Any

from ..compiler import compile_text
from ..ir import DataflowIR
from ..runtime.local import LocalRuntime
from ..runtime.metrics import COMPILER_STAGES, STAGES

OVERHEAD_SOURCE = '''
from typing import List

@stateflow
class Account:
    def __init__(self, aid: int, history: List[int]):
        self.aid: int = aid
        self.history: List[int] = history
        self.balance: int = 0

    def __key__(self):
        return self.aid

    def deposit(self, amount: int) -> int:
        self.balance += amount
        return self.balance

    def transfer(self, other: Account, amount: int) -> bool:
        received = other.deposit(amount)
        self.balance -= amount
        return received > 0
'''

DEFAULT_SIZES_KB = (50, 100, 200)


def overhead_ir() -> DataflowIR:
    return compile_text(OVERHEAD_SOURCE)


def padding(size_kb: float, rng: random.Random) -> list[int]:
    """Six-digit integers: seven serialized bytes each including the separator."""
    return [rng.randrange(100_000, 1_000_000) for _ in range(int(size_kb * 1024) // 7)]


def run_size(size_kb: float, events: int = 10_000, *, accounts: int = 16, seed: int = 0, ir: DataflowIR | None = None) -> dict[str, Any]:
    """Run invocations until at least ``events`` events were processed; one report row."""
    ir = ir or overhead_ir()
    rng = random.Random(seed)
    history = padding(size_kb, rng)
    rt = LocalRuntime(ir)
    handles = [rt.client_invoke("Account", a, "__init__", [a, history]) for a in range(accounts)]
    rt.metrics.__init__()  # measure the workload only
    start = time.perf_counter()
    invocations = 0
    while rt.metrics.event_count < events:
        a = rng.randrange(accounts)
        if rng.random() < 0.5:
            rt.client_invoke("Account", a, "deposit", [rng.randrange(1, 10)])
        else:
            b = (a + 1 + rng.randrange(accounts - 1)) % accounts
            rt.client_invoke("Account", a, "transfer", [handles[b], rng.randrange(1, 10)])
        invocations += 1
    elapsed = time.perf_counter() - start
    summary = rt.metrics.stage_summary()
    total = sum(summary[s]["total_ns"] for s in STAGES)
    n = rt.metrics.event_count
    return {
        "state_size_kb": size_kb,
        "state_bytes": max((len(raw) for store in rt.executor.stores.values() for raw in store.data.values()), default=0),
        "events": n,
        "invocations": invocations,
        "elapsed_s": elapsed,
        "per_event_us": {s: summary[s]["mean_ns"] / 1000 for s in STAGES},
        "stage_share": {s: (summary[s]["total_ns"] / total if total else 0.0) for s in STAGES},
        "compiler_fraction": rt.metrics.compiler_fraction(),
        "compiler_stages": list(COMPILER_STAGES),
        "exactly_once": {
            "submitted": rt.submitted,
            "replies": rt.replies,
            "failures": rt.failures,
            "blocks_balanced": {m: c for m, c in rt.metrics.block_exec.items() if c} == {m: c for m, c in rt.visits.items() if c},
        },
    }


def overhead_experiment(sizes_kb: list[float] | tuple[float, ...] = DEFAULT_SIZES_KB, events: int = 10_000, seed: int = 0) -> dict[str, Any]:
    ir = overhead_ir()
    rows = [run_size(s, events, seed=seed, ir=ir) for s in sizes_kb]
    return {
        "experiment": "overhead",
        "attribution": {"compiler": list(COMPILER_STAGES), "runtime": [s for s in STAGES if s not in COMPILER_STAGES]},
        "rows": rows,
        "max_compiler_fraction": max((r["compiler_fraction"] for r in rows), default=0.0),
    }
