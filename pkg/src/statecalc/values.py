"""The value universe: events, traces, markers, frozen maps, and their JSON form.

Every state and output is a hashable Python value built from ints, bools,
strings (symbols), tuples, frozensets, :class:`FrozenMap`, :class:`Marker`
and registered record types such as :class:`Event`. Structural equality and
hashing come for free, which is all exploration and minimization need.
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from typing import Any, Callable, Iterable, NamedTuple


class Marker:
    """Distinguished singleton values (``NULLV``, ``NULLM``, ``UNSPECIFIED``)."""

    _registry: dict[str, "Marker"] = {}

    def __new__(cls, name: str):
        existing = cls._registry.get(name)
        if existing is not None:
            return existing
        obj = super().__new__(cls)
        obj.name = name
        cls._registry[name] = obj
        return obj

    def __repr__(self):
        return self.name

    def __reduce__(self):
        return (Marker, (self.name,))

    def __eq__(self, other):
        return self is other

    def __hash__(self):
        return hash(("marker", self.name))


NULLV = Marker("nullv")
NULLM = Marker("nullm")
UNSPECIFIED = Marker("unspecified")


class Event(NamedTuple):
    name: str
    payload: Any = None

    def __repr__(self):
        if self.payload is None:
            return self.name
        return f"{self.name}[{self.payload!r}]"


Trace = tuple  # a trace is a tuple of Events; () is the empty trace
NULLS: tuple = ()


def append(trace: tuple, event: Event) -> tuple:
    return trace + (event,)


def concat(trace: tuple, more: Iterable[Event]) -> tuple:
    return trace + tuple(more)


def is_trace(value) -> bool:
    return isinstance(value, tuple) and not isinstance(value, Event) and all(
        isinstance(e, Event) for e in value
    )


class FrozenMap(Mapping):
    """Immutable, hashable mapping; equality ignores insertion order."""

    __slots__ = ("_d", "_h")

    def __init__(self, items=()):
        self._d = dict(items)
        self._h = None

    def __getitem__(self, key):
        return self._d[key]

    def __iter__(self):
        return iter(self._d)

    def __len__(self):
        return len(self._d)

    def __hash__(self):
        if self._h is None:
            self._h = hash(frozenset(self._d.items()))
        return self._h

    def __eq__(self, other):
        if isinstance(other, FrozenMap):
            return self._d == other._d
        return NotImplemented

    def __repr__(self):
        return f"FrozenMap({self._d!r})"

    def set(self, key, value) -> "FrozenMap":
        d = dict(self._d)
        d[key] = value
        return FrozenMap(d)


# -- JSON encoding ---------------------------------------------------------

_records: dict[type, tuple[str, Callable, Callable]] = {}
_decoders: dict[str, Callable] = {}


def register_record(cls: type, tag: str, to_fields: Callable, from_fields: Callable):
    """Teach :func:`encode` / :func:`decode` about a record type."""
    _records[cls] = (tag, to_fields, from_fields)
    _decoders[tag] = from_fields


register_record(
    Event,
    "event",
    lambda e: [e.name, e.payload],
    lambda f: Event(f[0], f[1]),
)


def encode(value) -> Any:
    """Encode a value as plain JSON data. Inverse of :func:`decode`."""
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, int):
        return value
    if isinstance(value, Marker):
        return {"marker": value.name}
    rec = _records.get(type(value))
    if rec is not None:
        tag, to_fields, _ = rec
        return {tag: [encode(f) for f in to_fields(value)]}
    if isinstance(value, tuple):
        return {"tuple": [encode(v) for v in value]}
    if isinstance(value, frozenset):
        return {"set": sorted((encode(v) for v in value), key=canonical)}
    if isinstance(value, FrozenMap):
        pairs = [[encode(k), encode(v)] for k, v in value.items()]
        return {"map": sorted(pairs, key=canonical)}
    raise TypeError(f"not a Value: {value!r}")


def decode(data) -> Any:
    if data is None or isinstance(data, (bool, str, int)):
        return data
    if isinstance(data, list):
        raise TypeError("bare JSON arrays are not Values; use {'tuple': [...]}")
    if not isinstance(data, dict) or len(data) != 1:
        raise TypeError(f"cannot decode {data!r}")
    (tag, body), = data.items()
    if tag == "marker":
        if body not in Marker._registry:
            raise TypeError(f"unknown marker {body!r}")
        return Marker(body)
    if tag == "tuple":
        return tuple(decode(v) for v in body)
    if tag == "set":
        return frozenset(decode(v) for v in body)
    if tag == "map":
        return FrozenMap((decode(k), decode(v)) for k, v in body)
    if tag in _decoders:
        return _decoders[tag]([decode(f) for f in body])
    raise TypeError(f"unknown tag {tag!r}")


def canonical(data) -> str:
    """Canonical compact JSON text of already-encoded data."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def dumps(value) -> str:
    return canonical(encode(value))


def sort_key(value) -> tuple:
    """Total order over heterogeneous values (ints numerically), for deterministic output."""
    if value is None:
        return (0,)
    if isinstance(value, bool):
        return (1, int(value))
    if isinstance(value, int):
        return (2, value)
    if isinstance(value, str):
        return (3, value)
    if isinstance(value, Marker):
        return (4, value.name)
    rec = _records.get(type(value))
    if rec is not None:
        return (5, rec[0], tuple(sort_key(f) for f in rec[1](value)))
    if isinstance(value, tuple):
        return (6, tuple(sort_key(v) for v in value))
    if isinstance(value, frozenset):
        return (7, tuple(sorted(sort_key(v) for v in value)))
    if isinstance(value, FrozenMap):
        return (8, tuple(sorted((sort_key(k), sort_key(v)) for k, v in value.items())))
    raise TypeError(f"not a Value: {value!r}")
