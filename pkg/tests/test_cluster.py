"""Cluster simulator: topic shape, P1W1 ≡ local, drain, latency injection, config validation."""

import pytest

from entityflow.bench.hotel import WorkloadSpec, hotel_ir
from entityflow.bench.runner import run_hotel
from entityflow.cluster import ClusterConfig, LatencyModel, start_cluster
from entityflow.runtime.local import LocalRuntime

THREAD = dict(backend="thread")


def _shop_script(client, items=4):
    out = []
    refs = [client.client_invoke("Item", f"i{i}", "__init__", [f"i{i}", 100 * (i + 1)]) for i in range(items)]
    for i in range(items):
        out.append(client.client_invoke("Item", f"i{i}", "update_stock", [i]))
    for u in range(3):
        client.client_invoke("User", u, "__init__", [u])
        out.append(client.client_invoke("User", u, "add_to_basket", [refs[u:]]))
        out.append(client.client_invoke("User", u, "buy_item", [1, refs[-1]]))
    return out


def test_topic_shape_hotel():
    ir = hotel_ir()
    with start_cluster(ir, ClusterConfig(partitions=4, workers=2, **THREAD)) as c:
        names = [t.name for t in c.topics]
        assert names[0] == "ingress" and names[-1] == "egress"
        assert sorted(names[1:-1]) == sorted(f"op-{op.class_name}" for op in ir.operators)
        assert all(t.partitions == 4 for t in c.topics)


def test_p1w1_matches_local(shop):
    local = LocalRuntime(shop.ir)
    expected = _shop_script(local)
    with start_cluster(shop.ir, ClusterConfig(**THREAD)) as c:
        assert _shop_script(c) == expected
        assert c.snapshot() == local.snapshot()


def test_process_backend_drain_report(shop):
    c = start_cluster(shop.ir, ClusterConfig(partitions=4, workers=2))
    assert len(_shop_script(c)) == 10
    report = c.shutdown(drain=True)
    eo = report["exactly_once"]
    assert report["drained"] and eo["in_flight"] == 0
    assert eo["replies_balanced"] and eo["blocks_balanced"]
    assert report["topics"]["ingress"]["records"] >= eo["submitted"]
    assert report["undelivered"] == 0 and not report["locks_held"]


def test_no_drain_flags_undelivered(shop):
    c = start_cluster(shop.ir, ClusterConfig(partitions=2, workers=2, latency=LatencyModel.fixed(500_000), **THREAD))
    futs = [c.submit("Item", f"z{i}", "__init__", [f"z{i}", 1]) for i in range(20)]
    report = c.shutdown(drain=False, timeout=10)
    assert not report["drained"]
    assert report["undelivered"] > 0
    assert all(f.done() for f in futs)


def test_zero_latency_bus_is_small(shop):
    with start_cluster(shop.ir, ClusterConfig(**THREAD)) as c:
        _shop_script(c)
        report = c.shutdown()
    assert report["latency_model"]["kind"] == "none"
    assert report["bus"]["mean_injected_us"] == 0.0
    assert report["stages_ns"]["bus"]["mean_ns"] < 5_000_000


def test_uniform_latency_is_sampled_in_range(shop):
    with start_cluster(shop.ir, ClusterConfig(partitions=2, workers=2, **THREAD)) as c:
        c.inject_latency(LatencyModel.uniform(200, 800))
        _shop_script(c)
        report = c.shutdown()
    assert report["bus"]["worker_hops"] > 0
    assert 200 <= report["bus"]["mean_injected_us"] <= 800
    assert report["stages_ns"]["bus"]["mean_ns"] >= 200_000


def test_latency_model_parse():
    assert LatencyModel.parse("none").mean_us == 0
    assert LatencyModel.parse("fixed:250").mean_us == 250
    assert LatencyModel.parse("uniform:100:300").mean_us == 200
    with pytest.raises(ValueError):
        LatencyModel.parse("gaussian:1")


@pytest.mark.parametrize("kw", [dict(partitions=0), dict(workers=0), dict(partitions=2, workers=3), dict(backend="gpu")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ClusterConfig(**kw)


def test_small_hotel_run_balanced_and_partition_invariant():
    spec = WorkloadSpec(rate=0, requests=400, seed=3, hotels=50, users=60, cells=5)
    a = run_hotel(spec, partitions=1, workers=1, **THREAD)
    b = run_hotel(spec, partitions=4, workers=2, **THREAD)
    assert a.reply_multiset == b.reply_multiset
    for r in (a, b):
        eo = r.report["exactly_once"]
        assert eo["replies_balanced"] and eo["blocks_balanced"] and eo["in_flight"] == 0
        assert sum(r.report["workload"]["endpoint_requests"].values()) == 400
