"""Bench arithmetic: workload generation, pacing, percentiles, report assembly."""

import random

import pytest

from entityflow.bench.hotel import ENDPOINTS, WorkloadSpec, generate_requests, hotel_ir, parse_mix, populate
from entityflow.bench.overhead import padding, run_size
from entityflow.bench.runner import drive
from entityflow.runtime.local import LocalRuntime
from entityflow.runtime.report import percentiles_ms


@pytest.fixture(scope="module")
def hotel():
    ir = hotel_ir()
    rt = LocalRuntime(ir, partitions=4)
    spec = WorkloadSpec(rate=1, duration=3, seed=5, hotels=50, users=20, cells=5)
    return rt, spec, populate(rt, spec)


def test_rate_times_duration(hotel):
    _, spec, pop = hotel
    reqs = generate_requests(spec, pop)
    assert len(reqs) == 3
    assert [r.at for r in reqs] == [0.0, 1.0, 2.0]


def test_requests_are_seeded(hotel):
    _, spec, pop = hotel
    assert generate_requests(spec, pop) == generate_requests(spec, pop)


def test_endpoint_counts_sum_to_total(hotel):
    _, _, pop = hotel
    spec = WorkloadSpec(rate=0, requests=500, seed=9, hotels=50, users=20, cells=5)
    reqs = generate_requests(spec, pop)
    counts = {}
    for r in reqs:
        counts[r.endpoint] = counts.get(r.endpoint, 0) + 1
    assert sum(counts.values()) == 500
    assert set(counts) <= set(ENDPOINTS)


def test_mix_validation():
    assert parse_mix("search=0.6,recommend=0.4") == {"search": 0.6, "recommend": 0.4}
    with pytest.raises(ValueError):
        WorkloadSpec(mix={"search": 0.5})
    with pytest.raises(ValueError):
        WorkloadSpec(mix={"fly": 1.0})


def test_percentiles_ordered():
    rng = random.Random(1)
    xs = [rng.expovariate(100) for _ in range(1000)]
    p = percentiles_ms(xs)
    assert p["count"] == 1000
    assert p["p50"] <= p["p99"]
    assert p["p50"] > 0
    assert percentiles_ms([])["count"] == 0


def test_drive_local_and_all_endpoints_answer(hotel):
    rt, _, pop = hotel
    spec = WorkloadSpec(rate=0, requests=200, seed=2, hotels=50, users=20, cells=5)
    reqs = generate_requests(spec, pop)
    futures, pacing = drive(rt, [(r.at, "User", r.key, r.endpoint, list(r.args)) for r in reqs], 0.0, window=10_000)
    rt.run_until_idle()  # the synchronous local runtime only pumps on demand
    assert len(futures) == 200 and all(f.done() for f in futures)
    assert not pacing["rate_unachievable"]
    for r, f in zip(reqs, futures):
        if r.endpoint == "search":
            assert isinstance(f.result(), list)


def test_search_fans_out_to_nine_calls(hotel):
    """README documents 9 entity calls per search (paper §4); count hops on the local runtime."""
    rt, spec, pop = hotel
    reqs = [r for r in generate_requests(WorkloadSpec(rate=0, requests=50, seed=4, hotels=50, users=20, cells=5), pop) if r.endpoint == "search"]
    rt.run_until_idle()
    before = rt.hops
    rt.client_invoke("User", reqs[0].key, "search", list(reqs[0].args))
    # every remote call is one hop out and one hop back
    assert rt.hops - before == 2 * 9


def test_padding_size():
    pad = padding(10, random.Random(0))
    assert abs(len(str(pad).replace(" ", "")) - 10 * 1024) < 64


def test_overhead_row_shape():
    row = run_size(1, events=200, accounts=4)
    assert row["events"] >= 200
    assert abs(sum(row["stage_share"].values()) - 1.0) < 1e-9
    assert 0 <= row["compiler_fraction"] < 1
    eo = row["exactly_once"]
    assert eo["submitted"] == eo["replies"] + eo["failures"] and eo["blocks_balanced"]
