"""Function splitter: golden §2.3 listings plus structural properties."""

import time

import pytest

from conftest import compile_one
from entityflow.ir import ExecutionGraphInstance
from entityflow.runtime.graph import advance_execution_graph, new_execution_graph, resolve_params
from entityflow.splitter import InvokeRemote, Return, block_uses_defs, check_definitions
from entityflow.values import encode
from progen import generate


def test_buy_item_golden(shop):
    blocks, machine = shop.splits["User.buy_item"]
    assert [b.id for b in blocks] == ["buy_item_0", "buy_item_1"]
    b0, b1 = blocks
    assert set(b0.returns) == {"total_price"}
    assert {"total_price", "remove_stock_return"} <= set(b1.param_names)
    assert isinstance(b0.terminator, InvokeRemote) and b0.terminator.method == "remove_stock"
    assert isinstance(b1.terminator, Return)
    assert machine.exits == ("buy_item_1",)


def test_add_to_basket_reverse_scan(shop):
    blocks, machine = shop.splits["User.add_to_basket"]
    ids = [b.id for b in blocks]
    assert "add_to_basket_0" in ids and "add_to_basket_4" in ids
    b4 = machine.block("add_to_basket_4")
    assert "total_price" in b4.param_names and "total_price" in machine.block("add_to_basket_0").returns
    # a visit log where _0 produced total_price and nothing later redefined it
    eg = ExecutionGraphInstance(machine.method, ("User", 1), "add_to_basket_4")
    eg.visit_log = [
        ("add_to_basket_0", {"total_price": 0, "item_iter": [], "item_idx": 0}),
        ("add_to_basket_1", {"item": encode(_ref()), "item_idx": 1}),
        ("add_to_basket_call_0", {"enough_stock_return": True}),
        ("add_to_basket_3", {}),
    ]
    assert resolve_params(eg, b4)["total_price"] == 0
    # after a second iteration the newest total_price (from _4) wins
    eg.visit_log += [("add_to_basket_4", {"total_price": 7}), ("add_to_basket_6", {})]
    assert resolve_params(eg, b4)["total_price"] == 7


def _ref():
    from entityflow.values import EntityRef

    return EntityRef("Item", "a")


def test_golden_split_is_fast(shop):
    t = time.perf_counter()
    from entityflow.compiler import compile_files, program_path

    assert compile_files([program_path("shop")]).ok
    assert time.perf_counter() - t < 1.0


def test_method_without_remote_calls_is_single_block(shop):
    blocks, machine = shop.splits["Item.remove_stock"]
    assert not machine.is_split or all(not isinstance(b.terminator, InvokeRemote) for b in blocks)
    assert not machine.calls


def test_execution_graph_walk_buy_item(shop):
    _, machine = shop.splits["User.buy_item"]
    eg, args = new_execution_graph(machine, ("User", 1), {"amount": 2, "item": _ref()})
    assert args["amount"] == 2
    step = advance_execution_graph(eg, machine, "buy_item_0", {"total_price": 20})
    assert step.node == "buy_item_call_0"
    step = advance_execution_graph(eg, machine, "buy_item_call_0", {"remove_stock_return": True})
    assert step.node == "buy_item_1" and step.args == {"total_price": 20, "remove_stock_return": True}
    done = advance_execution_graph(eg, machine, "buy_item_1", {}, payload=20)
    assert done.payload == 20


IF_FOR = '''
from typing import List

@stateflow
class Leaf:
    def __init__(self, lid: int):
        self.lid: int = lid
        self.v: int = 1

    def __key__(self):
        return self.lid

    def get(self) -> int:
        return self.v


@stateflow
class Root:
    def __init__(self, rid: int):
        self.rid: int = rid

    def __key__(self):
        return self.rid

    def total(self, leaves: List[Leaf], bonus: int) -> int:
        acc = 0
        for leaf in leaves:
            if leaf.get() > 0:
                acc += leaf.get()
            else:
                acc -= 1
        while acc < bonus:
            acc += 1
        return acc
'''


def test_if_for_while_split_structure():
    r = compile_one(IF_FOR)
    assert r.ok, [str(d) for d in r.diagnostics]
    blocks, m = r.splits["Root.total"]
    labels = {e.label for e in m.edges}
    assert {"iterate", "done", "true", "false", "call", "return-to"} <= labels
    assert len(m.calls) == 2
    assert check_definitions(m, ["leaves", "bonus"]) == []


@pytest.mark.parametrize("seed", range(60))
def test_generated_machines_are_well_formed(seed):
    """Every block param is defined on every path; every edge target exists; each block uses what it declares."""
    prog = generate(seed)
    r = compile_one(prog.source)
    assert r.ok, [str(d) for d in r.diagnostics]
    params = {m.qualname: m.param_names for c in r.descriptors for m in c.methods}
    for qual, (blocks, m) in r.splits.items():
        nodes = set(m.nodes)
        assert all(e.src in nodes and e.dst in nodes for e in m.edges)
        assert m.entry == blocks[0].id
        if not m.is_split:  # unsplit methods keep their structured body in one block
            continue
        assert check_definitions(m, [p for p in params[qual] if p != "self"]) == [], qual
        for b in blocks:
            uses, _ = block_uses_defs(b)
            assert set(uses) - {"self"} <= set(b.param_names), (qual, b.id)
