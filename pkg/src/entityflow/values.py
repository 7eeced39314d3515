"""Runtime values and their tagged JSON encoding.

Literals, booleans and lists map onto JSON directly. Two tags cover the rest:

* ``{"@obj": cls, "f": {...}}``: a value object (instance of an unmarked class)
* ``{"@ref": [cls, key], "f": {...}}``: a handle to a stateful entity. ``f``
  carries the entity's immutable fields so handle field reads never leave the
  partition holding the handle.
"""

from __future__ import annotations

import functools
import hashlib
import json
from typing import Any

import orjson

from .frontend.syntax import TypeRef


class EntityRef:
    """Handle to a stateful entity; equality and hashing use (class, key) only."""

    __slots__ = ("cls", "key", "frozen")

    def __init__(self, cls: str, key: Any, frozen: dict[str, Any] | None = None):
        self.cls = cls
        self.key = key
        self.frozen = frozen or {}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EntityRef) and self.cls == other.cls and self.key == other.key

    def __hash__(self) -> int:
        return hash((self.cls, self.key))

    def __repr__(self) -> str:
        return f"{self.cls}<{self.key!r}>"


class Record:
    """Immutable value object."""

    __slots__ = ("cls", "fields")

    def __init__(self, cls: str, fields: dict[str, Any]):
        self.cls = cls
        self.fields = fields

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Record) and self.cls == other.cls and self.fields == other.fields

    def __hash__(self) -> int:  # pragma: no cover - records are not used as keys
        return hash((self.cls, tuple(sorted(self.fields))))

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v!r}" for k, v in self.fields.items())
        return f"{self.cls}({inner})"


_SCALARS = (type(None), bool, int, float, str)
_SCALAR_SET = frozenset(_SCALARS)


def _all_scalars(xs: list) -> bool:
    return set(map(type, xs)) <= _SCALAR_SET


def encode(v: Any) -> Any:
    t = type(v)
    if t in _SCALARS:
        return v
    if t is list:
        if _all_scalars(v):
            return v  # lists are immutable program values: share, don't copy
        return [x if type(x) in _SCALARS else encode(x) for x in v]
    if t is EntityRef:
        return {"@ref": [v.cls, v.key], "f": {k: x if type(x) in _SCALARS else encode(x) for k, x in v.frozen.items()}}
    if t is Record:
        return {"@obj": v.cls, "f": {k: x if type(x) in _SCALARS else encode(x) for k, x in v.fields.items()}}
    if isinstance(v, (bool, int, float, str)):  # subclasses of the literal types
        return v
    raise TypeError(f"value of type {t.__name__} is not serializable")


def decode(j: Any) -> Any:
    t = type(j)
    if t is list:
        if _all_scalars(j):
            return j
        return [x if type(x) in _SCALARS else decode(x) for x in j]
    if t is dict:
        f = j.get("f")
        fields = {k: x if type(x) in _SCALARS else decode(x) for k, x in f.items()} if f else {}
        if "@ref" in j:
            cls, key = j["@ref"]
            return EntityRef(cls, key, fields)
        if "@obj" in j:
            return Record(j["@obj"], fields)
        raise ValueError(f"untagged object in value encoding: {sorted(j)}")
    return j


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def fast_dumps(obj: Any, sort_keys: bool = False) -> bytes:
    """Compact JSON via orjson; falls back to the stdlib for values orjson rejects (big ints)."""
    try:
        return orjson.dumps(obj, option=orjson.OPT_SORT_KEYS if sort_keys else 0)
    except (orjson.JSONEncodeError, TypeError, OverflowError):
        return json.dumps(obj, sort_keys=sort_keys, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def fast_loads(data: bytes | str) -> Any:
    try:
        return orjson.loads(data)
    except orjson.JSONDecodeError:
        return json.loads(data)  # NaN/Infinity or integers beyond 64 bits


def dumps_value(v: Any) -> bytes:
    return canonical_json(encode(v))


def loads_value(data: bytes | str) -> Any:
    return decode(json.loads(data))


def stable_hash(value: Any) -> int:
    """Seed-free 64-bit hash over the canonical encoding of ``value``."""
    digest = hashlib.blake2b(canonical_json(encode(value)), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def partition_of(key: Any, partition_count: int) -> int:
    if type(key) in (int, str):
        return _key_hash(key) % partition_count
    return stable_hash(key) % partition_count


@functools.lru_cache(maxsize=65536, typed=True)
def _key_hash(key: int | str) -> int:
    return stable_hash(key)


def conforms(value: Any, t: TypeRef | None, stateful: set[str] | frozenset = frozenset()) -> bool:
    """Shallow structural check of ``value`` against a declared type."""
    if t is None:
        return True
    name = t.name
    if name == "bool":
        return isinstance(value, bool)
    if name == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if name == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if name == "str":
        return isinstance(value, str)
    if name == "None":
        return value is None
    if name == "List":
        return isinstance(value, list) and all(conforms(x, t.elem, stateful) for x in value)
    if name in stateful:
        return isinstance(value, EntityRef) and value.cls == name
    return isinstance(value, Record) and value.cls == name
