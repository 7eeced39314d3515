"""The seven acceptance criteria of the spec, one test each.

Criterion 6 (scaling) asserts the spec's threshold unchanged. On a host
with one CPU it cannot pass: four worker processes share the one core, so
P=4/W=4 can only add overhead. See /root/notes/decisions.md.
"""

import time

import pytest

from entityflow.bench.hotel import WorkloadSpec, hotel_ir
from entityflow.bench.overhead import overhead_experiment
from entityflow.bench.runner import run_hotel, scaling_experiment
from entityflow.cluster import LatencyModel
from entityflow.compiler import compile_files, program_path
from entityflow.ir import ExecutionGraphInstance
from entityflow.runtime.graph import resolve_params
from entityflow.values import EntityRef, encode
from equivalence import check_seed

HOTEL_SPEC = WorkloadSpec(rate=0, requests=10_000, seed=7)


@pytest.fixture(scope="module")
def partition_runs():
    """Criterion 3's two runs; criterion 4 also audits them."""
    ir = hotel_ir()
    t = time.perf_counter()
    # thread backend: the spec's bus is in-process; process workers only add IPC cost on one CPU
    p1 = run_hotel(HOTEL_SPEC, partitions=1, workers=1, key_lock=True, ir=ir, backend="thread")
    p8 = run_hotel(HOTEL_SPEC, partitions=8, workers=2, key_lock=True, ir=ir, backend="thread")
    return p1, p8, time.perf_counter() - t


def test_criterion_1_golden_split():
    t = time.perf_counter()
    result = compile_files([program_path("shop")])
    assert result.ok
    blocks, _ = result.splits["User.buy_item"]
    assert [b.id for b in blocks] == ["buy_item_0", "buy_item_1"]
    assert {"total_price", "remove_stock_return"} <= set(blocks[1].param_names)
    assert set(blocks[0].returns) == {"total_price"}

    _, machine = result.splits["User.add_to_basket"]
    b0, b4 = machine.block("add_to_basket_0"), machine.block("add_to_basket_4")
    assert b0 is not None and b4 is not None
    assert "total_price" in b0.returns and "total_price" in b4.param_names
    eg = ExecutionGraphInstance(machine.method, ("User", 1), b4.id)
    eg.visit_log = [
        ("add_to_basket_0", {"total_price": 0, "item_iter": [], "item_idx": 0}),
        ("add_to_basket_1", {"item": encode(EntityRef("Item", "a")), "item_idx": 1}),
        ("add_to_basket_call_0", {"enough_stock_return": True}),
        ("add_to_basket_3", {}),
    ]
    assert resolve_params(eg, b4)["total_price"] == 0  # found at _0 by scanning the log newest-first
    assert time.perf_counter() - t < 1.0


def test_criterion_2_oracle_equivalence():
    t = time.perf_counter()
    mismatches = {seed: p for seed in range(1000) if (p := check_seed(seed))}
    assert mismatches == {}
    assert time.perf_counter() - t < 300


def test_criterion_3_partition_invariance(partition_runs):
    p1, p8, elapsed = partition_runs
    assert len(p1.replies) == len(p8.replies) == 10_000
    assert p1.reply_multiset == p8.reply_multiset
    assert elapsed < 120


def test_criterion_4_exactly_once(partition_runs):
    p1, p8, _ = partition_runs
    overhead = overhead_experiment([50], events=2000)
    for report in (p1.report, p8.report):
        eo = report["exactly_once"]
        assert eo["in_flight"] == 0
        assert eo["submitted"] == eo["replies"] + eo["failures"]
        assert eo["replies_balanced"] and eo["blocks_balanced"]
        assert eo["block_exec"] == eo["visit_log_blocks"]
    for row in overhead["rows"]:
        eo = row["exactly_once"]
        assert eo["submitted"] == eo["replies"] + eo["failures"] and eo["blocks_balanced"]


def test_criterion_5_overhead():
    t = time.perf_counter()
    report = overhead_experiment([50, 100, 200], events=10_000)
    assert all(r["events"] >= 10_000 for r in report["rows"])
    fractions = {r["state_size_kb"]: round(r["compiler_fraction"], 4) for r in report["rows"]}
    assert report["max_compiler_fraction"] < 0.05, fractions
    assert time.perf_counter() - t < 180


def test_criterion_6_scaling():
    t = time.perf_counter()
    result = scaling_experiment()
    assert time.perf_counter() - t < 120
    assert result["speedup"] >= 1.5, (
        f"P4/W4 {result['p4w4_rps']:.0f} rps vs P1/W1 {result['p1w1_rps']:.0f} rps "
        f"= {result['speedup']:.2f}x on {result['cpus']} CPU(s)"
    )


def test_criterion_7_hop_latency():
    t = time.perf_counter()
    hop_us = 1000
    spec = WorkloadSpec(mix={"search": 1.0}, rate=50, requests=100, seed=11)
    result = run_hotel(spec, partitions=4, workers=2, latency=LatencyModel.fixed(hop_us), backend="thread")
    p50_ms = result.report["endpoints"]["search"]["p50"]
    assert result.report["exactly_once"]["replies_balanced"]
    assert p50_ms >= 9 * hop_us / 1000, p50_ms
    assert time.perf_counter() - t < 60
