"""Dataflow IR: round-trip, validation fixtures, DOT export."""

import json

import pytest

from entityflow.ir import IR_VERSION, IRError, dataflow_to_dot, deserialize_ir, ir_to_json, serialize_ir, validate_ir
from entityflow.splitter import machine_to_dot


def _doc(shop):
    return json.loads(serialize_ir(shop.ir))


def test_round_trip_is_identity(shop):
    data = serialize_ir(shop.ir)
    back = deserialize_ir(data)
    assert back == shop.ir
    assert serialize_ir(back) == data
    assert json.loads(data)["version"] == IR_VERSION


def test_serialization_is_deterministic(shop):
    from entityflow.compiler import compile_files, program_path

    again = compile_files([program_path("shop")]).ir
    assert serialize_ir(again) == serialize_ir(shop.ir)


def test_valid_ir_has_no_diagnostics(shop):
    assert validate_ir(shop.ir) == []


def test_no_operators_rejected(shop):
    doc = _doc(shop)
    doc["operators"] = []
    doc["machines"] = {}
    with pytest.raises(IRError, match="no operators"):
        deserialize_ir(json.dumps(doc))


def test_dangling_remote_call_rejected(shop):
    doc = _doc(shop)
    call = doc["machines"]["User.buy_item"]["calls"][0]
    call["method"] = "vanish"
    with pytest.raises(IRError, match="dangling remote call"):
        deserialize_ir(json.dumps(doc))


def test_unreachable_block_rejected(shop):
    doc = _doc(shop)
    m = doc["machines"]["User.buy_item"]
    m["edges"] = [e for e in m["edges"] if e["label"] != "return-to"]
    with pytest.raises(IRError, match="unreachable block buy_item_1"):
        deserialize_ir(json.dumps(doc))


def test_key_not_in_schema_rejected(shop):
    doc = _doc(shop)
    op = next(o for o in doc["operators"] if o["class_name"] == "Item")
    op["state_schema"] = [f for f in op["state_schema"] if f[0] != "item_id"]
    with pytest.raises(IRError, match="key not in state schema"):
        deserialize_ir(json.dumps(doc))


def test_version_mismatch_and_garbage(shop):
    doc = _doc(shop)
    doc["version"] = "entityflow-ir/0"
    with pytest.raises(IRError, match="version"):
        deserialize_ir(json.dumps(doc))
    with pytest.raises(IRError, match="malformed"):
        deserialize_ir(b"{not json")
    with pytest.raises(IRError, match="malformed"):
        deserialize_ir(json.dumps({"version": IR_VERSION, "operators": []}))


def test_unvalidated_load_keeps_broken_ir(shop):
    doc = _doc(shop)
    doc["operators"] = []
    ir = deserialize_ir(json.dumps(doc), validate=False)
    assert any("no operators" in d.message for d in validate_ir(ir))


def test_dot_export(shop):
    dot = dataflow_to_dot(shop.ir)
    assert dot.startswith("digraph") and "ingress" in dot and "egress" in dot
    for op in shop.ir.operators:
        assert op.class_name in dot
    mdot = machine_to_dot(shop.ir.machines["User.buy_item"])
    assert "buy_item_0" in mdot and "buy_item_call_0" in mdot and "->" in mdot


def test_ir_json_lists_one_operator_per_stateful_class(shop):
    doc = ir_to_json(shop.ir)
    assert sorted(o["class_name"] for o in doc["operators"]) == ["Item", "User"]
