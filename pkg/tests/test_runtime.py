"""Local runtime: Listing 1 scenarios, error paths, exactly-once counters, oracle equivalence sample."""

import pytest

from entityflow.compiler import compile_files, program_path
from entityflow.oracle import Oracle
from entityflow.runtime.client import InvocationError
from entityflow.runtime.local import LocalRuntime
from equivalence import check_seed


@pytest.fixture
def rt(shop):
    return LocalRuntime(shop.ir, partitions=4)


def _setup(rt, prices):
    items = []
    for i, price in enumerate(prices):
        ref = rt.client_invoke("Item", f"i{i}", "__init__", [f"i{i}", price])
        rt.client_invoke("Item", f"i{i}", "update_stock", [5])
        items.append(ref)
    rt.client_invoke("User", 1, "__init__", [1])
    return items


def test_add_to_basket_within_balance(rt):
    items = _setup(rt, [300, 400])
    assert rt.client_invoke("User", 1, "add_to_basket", [items]) is True
    assert [r.key for r in rt.snapshot()[("User", 1)]["basket"]] == ["i0", "i1"]


def test_add_to_basket_over_balance(rt):
    items = _setup(rt, [600, 700])
    assert rt.client_invoke("User", 1, "add_to_basket", [items]) is False
    assert rt.snapshot()[("User", 1)]["basket"] == []


def test_out_of_stock_items_are_free(rt):
    items = _setup(rt, [600, 700])
    rt.client_invoke("Item", "i1", "update_stock", [-5])
    assert rt.client_invoke("User", 1, "add_to_basket", [items]) is True


def test_buy_item_removes_stock(rt):
    items = _setup(rt, [25])
    assert rt.client_invoke("User", 1, "buy_item", [3, items[0]]) == 75
    assert rt.snapshot()[("Item", "i0")]["stock"] == 2
    assert rt.client_invoke("User", 1, "buy_item", [9, items[0]]) == 225
    assert rt.snapshot()[("Item", "i0")]["stock"] == 2  # remove_stock refused


def test_unknown_entity_and_method_fail(rt):
    with pytest.raises(InvocationError):
        rt.client_invoke("User", 99, "buy_item", [1, None])
    _setup(rt, [1])
    with pytest.raises(InvocationError):
        rt.client_invoke("User", 1, "nope", [])


def test_exactly_once_counters(rt):
    items = _setup(rt, [10, 20, 30])
    for _ in range(5):
        rt.client_invoke("User", 1, "add_to_basket", [items])
        rt.client_invoke("User", 1, "buy_item", [1, items[1]])
    with pytest.raises(InvocationError):
        rt.client_invoke("User", 2, "buy_item", [1, items[1]])
    assert rt.submitted == rt.replies + rt.failures
    assert rt.failures == 1
    assert {m: c for m, c in rt.metrics.block_exec.items() if c} == {m: c for m, c in rt.visits.items() if c}


def test_matches_oracle_on_listing1(shop):
    rt = LocalRuntime(shop.ir, partitions=3)
    oracle = Oracle(shop.descriptors)
    script = [
        ("Item", "a", "__init__", ["a", 100]),
        ("Item", "b", "__init__", ["b", 950]),
        ("Item", "a", "update_stock", [3]),
        ("Item", "b", "update_stock", [1]),
        ("User", 7, "__init__", [7]),
    ]
    refs = {}
    for cls, key, method, args in script:
        got = rt.client_invoke(cls, key, method, args)
        want = oracle.invoke(cls, key, method, args)
        if method == "__init__":
            refs[key] = got
        else:
            assert got == want
    for args in ([[refs["a"]]], [[refs["a"], refs["b"]]], [[refs["b"]]]):
        assert rt.client_invoke("User", 7, "add_to_basket", args) == oracle.invoke("User", 7, "add_to_basket", args)
    assert rt.client_invoke("User", 7, "buy_item", [2, refs["a"]]) == oracle.invoke("User", 7, "buy_item", [2, refs["a"]])
    assert rt.snapshot() == oracle.snapshot()


@pytest.mark.parametrize("strict", [False, True])
def test_equivalence_sample(strict):
    for seed in range(40):
        assert check_seed(seed, strict_reentry=strict, partitions=3) == []


def test_threaded_local_runtime(shop):
    rt = LocalRuntime(shop.ir, threaded=True)
    try:
        rt.client_invoke("Item", "x", "__init__", ["x", 5])
        futs = [rt.submit("Item", "x", "update_stock", [1]) for _ in range(50)]
        assert all(f.result(10) is True for f in futs)
        assert rt.client_invoke("Item", "x", "enough_stock", []) is True
        assert rt.snapshot()[("Item", "x")]["stock"] == 50
    finally:
        rt.close()


def test_hotel_program_compiles():
    assert compile_files([program_path("hotel")]).ok
