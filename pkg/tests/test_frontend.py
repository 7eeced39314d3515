import textwrap

from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import codes, compile_one
from entityflow.frontend import diagnostics as D
from entityflow.frontend.analysis import analyze
from entityflow.frontend.parser import parse_program

GOOD = '''
@stateflow
class Counter:
    def __init__(self, cid: int):
        self.cid: int = cid
        self.n: int = 0

    def __key__(self):
        return self.cid

    def inc(self, by: int) -> int:
        self.n += by
        return self.n
'''


def test_listing1_discovery(shop):
    user = next(c for c in shop.descriptors if c.name == "User")
    assert user.is_stateful
    assert sorted(m.name for m in user.methods if m.name != "__key__") == ["__init__", "add_to_basket", "buy_item"]
    assert user.key_field == "userid"
    item = next(c for c in shop.descriptors if c.name == "Item")
    assert item.key_field == "item_id"
    assert item.handle_fields == ["price"]  # the only immutable field read through a handle


def test_empty_file_has_no_entities():
    program, diags = parse_program([("empty.sf", "")])
    assert not D.has_errors(diags)
    descriptors, more = analyze(program)
    assert [c for c in descriptors if c.is_stateful] == []


def test_lambda_is_unsupported():
    src = GOOD.replace("self.n += by", "f = lambda z: z\n        self.n += by")
    r = compile_one(src)
    assert not r.ok
    assert D.UNSUPPORTED in codes(r)


def test_missing_key_method():
    src = GOOD.replace("    def __key__(self):\n        return self.cid\n", "")
    r = compile_one(src)
    assert D.MISSING_KEY in codes(r)


def test_untyped_parameter():
    r = compile_one(GOOD.replace("by: int", "by"))
    assert D.UNTYPED_PARAM in codes(r)
    err = next(d for d in r.diagnostics if d.code == D.UNTYPED_PARAM)
    assert err.span is not None and err.span.line > 0


def test_key_reassignment_warns():
    r = compile_one(GOOD.replace("self.n += by", "self.cid = by\n        self.n += by"))
    assert D.KEY_REASSIGN in codes(r)


def test_syntax_error_reported():
    r = compile_one("@stateflow\nclass X(:\n")
    assert codes(r) == [D.SYNTAX]


def test_remote_mutable_field_read_rejected():
    src = GOOD + '''
@stateflow
class Reader:
    def __init__(self, rid: int):
        self.rid: int = rid

    def __key__(self):
        return self.rid

    def peek(self, c: Counter) -> int:
        return c.n
'''
    assert D.REMOTE_FIELD in codes(compile_one(src))


def test_well_formed_program_compiles():
    r = compile_one(GOOD)
    assert r.ok and r.ir is not None


names = st.from_regex(r"[a-z][a-z0-9]{0,6}", fullmatch=True).filter(lambda s: s not in {"self", "if", "in", "is", "or", "and", "not", "for", "def", "del", "as"})


@settings(max_examples=40, deadline=None)
@given(cls=st.from_regex(r"[A-Z][a-z]{1,6}", fullmatch=True), field=names, value=st.integers(-1000, 1000))
def test_generated_classes_round_trip(cls, field, value):
    """Any well-formed single-method entity compiles and its descriptor matches the source."""
    src = textwrap.dedent(f'''
        @stateflow
        class {cls}:
            def __init__(self, k: int):
                self.k: int = k
                self.{field}_v: int = {value}

            def __key__(self):
                return self.k

            def get(self) -> int:
                return self.{field}_v
    ''')
    r = compile_one(src)
    assert r.ok, [str(d) for d in r.diagnostics]
    d = next(c for c in r.descriptors if c.name == cls)
    assert f"{field}_v" in d.field_names
    assert [m.name for m in d.methods if m.name == "get"] == ["get"]
