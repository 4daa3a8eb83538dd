"""Executable catalog of the worked examples: counters, connected counters, queues."""

from __future__ import annotations

from typing import NamedTuple

from .errors import InvalidEventError
from .product import cascade_product, general_product
from .values import NULLV, Event, FrozenMap, register_record
from .variables import (
    StateVariable,
    combine,
    define,
    restrict,
    substitute,
    trace_variable,
)

TICK = Event("tick")


def _positive(c):
    if not isinstance(c, int) or isinstance(c, bool) or c < 1:
        raise ValueError(f"modulus must be a positive integer, got {c!r}")
    return c


def mod_counter(c: int) -> StateVariable:
    """Counts events mod ``c``: ``initial C = 0``, ``after e C = C + 1 mod c``."""
    c = _positive(c)
    return define(None, 0, lambda v, e: (v + 1) % c, name=f"C[{c}]")


def unbounded_counter() -> StateVariable:
    return define(None, 0, lambda v, e: v + 1, name="C_unbounded")


class ConnectedCounters(NamedTuple):
    counter: StateVariable  # C
    driver: StateVariable  # u: grows by e exactly when C = c - 1
    inner: StateVariable  # sub u C
    value: StateVariable  # D = C + c * sub u C


def connected_counter_parts(c: int) -> ConnectedCounters:
    c = _positive(c)
    C = mod_counter(c)
    u = trace_variable(lambda count, e: e if count == c - 1 else None, control=C, name="u")
    inner = substitute(u, C)
    D = combine(lambda low, high: low + c * high, C, inner, name=f"D[{c}]")
    return ConnectedCounters(C, u, inner, D)


def connected_counters(c: int) -> StateVariable:
    """Two mod ``c`` counters chained by substitution; counts mod ``c**2``."""
    return connected_counter_parts(c).value


def connected_counters_product(c: int) -> StateVariable:
    """The same wiring as a general product: (low, high) counters, ``D = low + c*high``."""
    c = _positive(c)
    p = general_product(
        [mod_counter(c), mod_counter(c)],
        [lambda e, outs: e, lambda e, outs: e if outs[0] == c - 1 else None],
        name=f"connected_product[{c}]",
    )
    return combine(lambda outs: outs[0] + c * outs[1], p, name=f"D_product[{c}]")


def connected_counters_cascade(c: int) -> StateVariable:
    """Loop-free ordering (high, low): the high counter reads only the low one."""
    c = _positive(c)
    p = cascade_product(
        [mod_counter(c), mod_counter(c)],
        [lambda e, outs: e if outs[1] == c - 1 else None, lambda e, outs: e],
        name=f"connected_cascade[{c}]",
    )
    return combine(lambda outs: outs[1] + c * outs[0], p, name=f"D_cascade[{c}]")


# -- queues ------------------------------------------------------------------


class QueueValue:
    """Finitely supported map from positions 1, 2, ... to values; absent means nullv.

    ``q(1)`` is the first element.
    """

    __slots__ = ("contents",)

    def __init__(self, contents=()):
        self.contents = FrozenMap((i, v) for i, v in dict(contents).items() if v is not NULLV)

    @classmethod
    def of(cls, *values) -> "QueueValue":
        return cls({i: v for i, v in enumerate(values, start=1)})

    def __call__(self, i: int):
        return self.contents.get(i, NULLV)

    def top(self) -> int:
        """``max{i : Q(i) != nullv}``, 0 when empty."""
        return max(self.contents, default=0)

    def items(self) -> list:
        return [self(i) for i in range(1, self.top() + 1)]

    def has_no_gaps(self) -> bool:
        return all(i in self.contents for i in range(1, self.top() + 1))

    def __eq__(self, other):
        return isinstance(other, QueueValue) and self.contents == other.contents

    def __hash__(self):
        return hash(("queue", self.contents))

    def __repr__(self):
        return f"Q{self.items()!r}"


register_record(QueueValue, "queue", lambda q: q.items(), lambda f: QueueValue.of(*f))

EMPTY_QUEUE = QueueValue()


def enq(v) -> Event:
    return Event("enq", v)


DEQ = Event("deq")


def queue_step(values=None):
    """The after-event rule for the queue map, case by case."""

    def step(q: QueueValue, e: Event) -> QueueValue:
        if e.name == "enq":
            v = e.payload
            if v is NULLV or (values is not None and v not in values):
                raise InvalidEventError(e, detail="enq payload must be a queue value other than nullv")
            top = q.top()
            # position 1 gets v, position i > 1 gets the old Q(i-1)
            return QueueValue({i: (v if i == 1 else q(i - 1)) for i in range(1, top + 2)})
        if e.name == "deq" and e.payload is None:
            return QueueValue({i: q(i + 1) for i in range(1, q.top())})
        return q

    return step


def queue_variable(values=None) -> StateVariable:
    """Map-valued queue variable. Events other than ``deq`` and ``enq[v]`` are ignored.

    The recursion writes new values at position 1 and ``deq`` removes
    position 1, so the discipline is last-in first-out.
    """
    if values is not None:
        values = frozenset(values)
        if NULLV in values:
            raise ValueError("nullv cannot be a queue value")
    return define(None, EMPTY_QUEUE, queue_step(values), name="Q")


class BoundedQueue(NamedTuple):
    cq: StateVariable
    high_water: StateVariable
    defined: StateVariable
    queue: StateVariable


def bounded_queue(c: int, values=None) -> BoundedQueue:
    """A ``c`` queue: ``CQ = Q(1)`` while Q is nonempty and never over-filled.

    ``HighWater`` takes the maximum occupied position of the queue after each
    event; outside the definedness predicate ``CQ`` is the unspecified marker.
    """
    c = _positive(c)
    q = queue_variable(values)
    step = q.transition
    # the rule reads the pre-event queue and applies this event to it
    hw = define(None, 0, lambda h, e, pre: max(h, step(pre, e).top()), reads=q, name="HighWater")
    ok = combine(lambda queue, h: queue(1) is not NULLV and h < c, q, hw, name="defined")
    cq = restrict(combine(lambda queue: queue(1), q), ok)
    return BoundedQueue(cq, hw, ok, q)
