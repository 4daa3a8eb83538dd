"""Generalized Moore machines: running, exploration, minimization, equivalence.

A :class:`Machine` is a pure rule ``(initial, step, out)`` over hashable
states. Nothing requires the state set to be finite; operations that
enumerate states take an explicit finite event basis and a state bound.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Iterable, NamedTuple, Sequence

from .errors import AlphabetViolation, IncompleteExploration
from .values import Event, decode, encode

# -- alphabets -------------------------------------------------------------

NO_PAYLOAD = None


class _AnyPayload:
    def __repr__(self):
        return "ANY_PAYLOAD"


ANY_PAYLOAD = _AnyPayload()


class Alphabet:
    """A set of event constructors: names, each with a payload domain.

    A domain is ``NO_PAYLOAD`` (payload must be None), ``ANY_PAYLOAD``, a
    predicate, or a container tested with ``in``. With ``open=True`` any
    undeclared name is accepted too, with any payload.
    """

    def __init__(self, constructors=None, open=False):
        self.constructors = dict(constructors or {})
        self.open = open

    @classmethod
    def any(cls) -> "Alphabet":
        return cls(open=True)

    @classmethod
    def of(cls, *names: str) -> "Alphabet":
        return cls({n: NO_PAYLOAD for n in names})

    @classmethod
    def finite(cls, events: Iterable[Event]) -> "Alphabet":
        return _FiniteAlphabet(events)

    def __contains__(self, event) -> bool:
        if not isinstance(event, Event):
            return False
        if event.name not in self.constructors:
            return self.open
        domain = self.constructors[event.name]
        if domain is NO_PAYLOAD:
            return event.payload is None
        if domain is ANY_PAYLOAD:
            return True
        if callable(domain):
            return bool(domain(event.payload))
        return event.payload in domain

    def __and__(self, other: "Alphabet") -> "Alphabet":
        return _Intersection(self, other)

    def __repr__(self):
        names = ", ".join(sorted(self.constructors))
        return f"Alphabet({names}{', open' if self.open else ''})"


class _FiniteAlphabet(Alphabet):
    def __init__(self, events):
        super().__init__()
        self.events = frozenset(events)

    def __contains__(self, event):
        return event in self.events

    def __repr__(self):
        return f"Alphabet.finite({sorted(map(repr, self.events))})"


class _Intersection(Alphabet):
    def __init__(self, *parts):
        super().__init__()
        self.parts = parts

    def __contains__(self, event):
        return all(event in p for p in self.parts)

    def __repr__(self):
        return " & ".join(map(repr, self.parts))


# -- machines --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Machine:
    """Generalized Moore machine (E, X, S, initial, step, out)."""

    alphabet: Alphabet
    initial: Any
    step: Callable[[Any, Event], Any]
    out: Callable[[Any], Any]
    name: str = ""


@dataclass(frozen=True, eq=False)
class Partition:
    """Disjoint classes plus the element -> class id lookup."""

    classes: tuple
    class_of: dict

    def __len__(self):
        return len(self.classes)

    def same_class(self, a, b) -> bool:
        return self.class_of[a] == self.class_of[b]


class Reachability(NamedTuple):
    states: tuple
    complete: bool


class EquivalenceResult(NamedTuple):
    equivalent: bool
    counterexample: tuple | None = None

    def __bool__(self):
        return self.equivalent


def _check(m: Machine, e, position=None):
    if e not in m.alphabet:
        raise AlphabetViolation(e, position)


def step_state(m: Machine, s, e: Event):
    _check(m, e)
    return m.step(s, e)


def state_after(m: Machine, w: Sequence[Event]):
    """The extended transition map: fold ``step`` over ``w`` from the initial state."""
    s = m.initial
    for i, e in enumerate(w):
        _check(m, e, i)
        s = m.step(s, e)
    return s


def run(m: Machine, w: Sequence[Event]):
    """Output after the trace ``w``."""
    return m.out(state_after(m, w))


def _basis(m: Machine, event_basis) -> tuple:
    basis = tuple(event_basis)
    for e in basis:
        _check(m, e)
    return basis


def reachable(m: Machine, event_basis: Iterable[Event], max_states: int) -> Reachability:
    """Breadth-first closure of the initial state under the basis events.

    Stops at ``max_states``; ``complete`` is False when some successor was
    left undiscovered.
    """
    if max_states < 1:
        raise ValueError("max_states must be >= 1")
    basis = _basis(m, event_basis)
    seen = {m.initial: None}
    queue = deque([m.initial])
    while queue:
        s = queue.popleft()
        for e in basis:
            t = m.step(s, e)
            if t in seen:
                continue
            if len(seen) >= max_states:
                return Reachability(tuple(seen), False)
            seen[t] = None
            queue.append(t)
    return Reachability(tuple(seen), True)


def refine(states: Sequence, basis: Sequence[Event], step, out) -> Partition:
    """Moore partition refinement: split by output, then by successor classes until stable."""
    block = {}
    first = {}
    for s in states:
        block[s] = first.setdefault(out(s), len(first))
    count = len(first)
    succ = {s: tuple(step(s, e) for e in basis) for s in states}
    while True:
        sigs = {}
        new_block = {}
        for s in states:
            sig = (block[s], tuple(block[t] for t in succ[s]))
            new_block[s] = sigs.setdefault(sig, len(sigs))
        block = new_block
        if len(sigs) == count:
            break
        count = len(sigs)
    classes = [[] for _ in range(count)]
    for s in states:
        classes[block[s]].append(s)
    return Partition(tuple(frozenset(c) for c in classes), block)


def minimize(m: Machine, event_basis: Iterable[Event], max_states: int):
    """Quotient of the reachable part of ``m`` by output-equivalence.

    Returns ``(minimal_machine, partition)``. The minimal machine's states are
    class ids ``0..k-1`` (0 is the initial class) and its alphabet is the
    basis itself.
    """
    basis = _basis(m, event_basis)
    reach = reachable(m, basis, max_states)
    if not reach.complete:
        raise IncompleteExploration(
            f"more than {max_states} reachable states; not finite over this basis", reach.states
        )
    part = refine(reach.states, basis, m.step, m.out)
    block = part.class_of
    table = {}
    outputs = []
    for cid, cls in enumerate(part.classes):
        rep = next(iter(cls))
        outputs.append(m.out(rep))
        for e in basis:
            table[cid, e] = block[m.step(rep, e)]
    return table_machine(basis, block[m.initial], table, outputs, name=m.name), part


def table_machine(basis, initial, table, outputs, name="") -> Machine:
    """A finite machine given as an explicit transition table."""
    outputs = tuple(outputs)
    return Machine(
        alphabet=Alphabet.finite(basis),
        initial=initial,
        step=lambda s, e: table[s, e],
        out=lambda s: outputs[s],
        name=name,
    )


def state_count(m: Machine, event_basis, max_states: int) -> int:
    reach = reachable(m, event_basis, max_states)
    if not reach.complete:
        raise IncompleteExploration(f"more than {max_states} reachable states", reach.states)
    return len(reach.states)


def equivalent(m1: Machine, m2: Machine, event_basis: Iterable[Event], max_states: int) -> EquivalenceResult:
    """Decide ``run(m1, w) == run(m2, w)`` for every trace over the basis.

    Breadth-first over reachable state pairs, so a counterexample is a
    shortest distinguishing trace, ties broken by basis order.
    """
    basis = tuple(event_basis)
    for e in basis:
        _check(m1, e)
        _check(m2, e)
    start = (m1.initial, m2.initial)
    if m1.out(start[0]) != m2.out(start[1]):
        return EquivalenceResult(False, ())
    parent = {start: None}
    queue = deque([start])
    while queue:
        pair = queue.popleft()
        for e in basis:
            nxt = (m1.step(pair[0], e), m2.step(pair[1], e))
            if nxt in parent:
                continue
            parent[nxt] = (pair, e)
            if m1.out(nxt[0]) != m2.out(nxt[1]):
                return EquivalenceResult(False, _path(parent, nxt))
            if len(parent) > max_states:
                raise IncompleteExploration(
                    f"more than {max_states} state pairs explored", tuple(parent)
                )
            queue.append(nxt)
    return EquivalenceResult(True, None)


def _path(parent, node) -> tuple:
    events = []
    while parent[node] is not None:
        node, e = parent[node]
        events.append(e)
    return tuple(reversed(events))


def words(event_basis: Sequence[Event], max_len: int):
    """All traces over the basis up to ``max_len``, shortest first, basis order within a length."""
    for n in range(max_len + 1):
        yield from itertools.product(event_basis, repeat=n)


def nerode_classes_bounded(
    f: Callable[[tuple], Any], event_basis: Iterable[Event], word_len: int, distinguisher_len: int
) -> Partition:
    """Group words of length <= ``word_len`` by ``f`` on every continuation of length <= ``distinguisher_len``.

    A bounded approximation of the Nerode right congruence of ``f``; larger
    ``distinguisher_len`` can only split classes.
    """
    if word_len < 0 or distinguisher_len < 0:
        raise ValueError("lengths must be non-negative")
    basis = tuple(event_basis)
    conts = list(words(basis, distinguisher_len))
    groups: dict[tuple, list] = {}
    class_of = {}
    order = {}
    for w in words(basis, word_len):
        sig = tuple(f(w + u) for u in conts)
        cid = order.setdefault(sig, len(order))
        groups.setdefault(cid, []).append(w)
        class_of[w] = cid
    return Partition(tuple(tuple(groups[i]) for i in range(len(order))), class_of)


# -- serialization ---------------------------------------------------------


def machine_to_dict(m: Machine, event_basis, max_states: int) -> dict:
    """Tabulate the reachable part of ``m`` as JSON-ready data.

    States are numbered in breadth-first discovery order.
    """
    basis = _basis(m, event_basis)
    reach = reachable(m, basis, max_states)
    if not reach.complete:
        raise IncompleteExploration(f"more than {max_states} reachable states", reach.states)
    index = {s: i for i, s in enumerate(reach.states)}
    return {
        "kind": "machine",
        "name": m.name,
        "basis": [encode(e) for e in basis],
        "initial": index[m.initial],
        "states": [
            {"id": i, "state": _encode_state(s), "out": encode(m.out(s))}
            for i, s in enumerate(reach.states)
        ],
        "transitions": [
            [index[s], j, index[m.step(s, e)]] for s in reach.states for j, e in enumerate(basis)
        ],
    }


def _encode_state(s):
    try:
        return encode(s)
    except TypeError:
        return repr(s)


def machine_from_dict(data: dict) -> Machine:
    basis = tuple(decode(e) for e in data["basis"])
    table = {(src, basis[j]): dst for src, j, dst in data["transitions"]}
    outputs = [decode(st["out"]) for st in sorted(data["states"], key=lambda d: d["id"])]
    return table_machine(basis, data["initial"], table, outputs, name=data.get("name", ""))


def partition_to_dict(part: Partition) -> dict:
    return {
        "kind": "partition",
        "classes": [sorted((_encode_state(s) for s in c), key=str) for c in part.classes],
    }
