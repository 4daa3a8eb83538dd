"""General products of state variables with output feedback.

Component ``i`` is driven by a trace ``u_i``. On every outer event the
feedback map ``phi_i`` looks at the event and at the current (pre-event)
outputs of all components, and says how ``u_i`` grows: not at all, by one
event, or (multi-step products) by a finite event sequence. All drivers
grow simultaneously.
"""

from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

from .errors import AlphabetViolation, CalcError, FeedbackError, InvalidEventError
from .machine import Alphabet, minimize, reachable
from .values import Event, NULLV, is_trace
from .variables import ANY, StateVariable, define, normalize_action, to_machine

FeedbackMap = Callable[[Event, tuple], object]


class ProductVariable(StateVariable):
    """The tuple ``(sub u_1 y_1, ..., sub u_n y_n)``."""

    def __init__(
        self,
        components: Sequence[StateVariable],
        feedbacks: Sequence[FeedbackMap],
        initial_traces: Sequence[tuple] | None = None,
        multi_step=False,
        alphabet: Alphabet | None = None,
        name="product",
    ):
        n = len(components)
        if n < 1:
            raise ValueError("a product needs at least one component")
        if len(feedbacks) != n:
            raise ValueError(f"{n} components but {len(feedbacks)} feedback maps")
        if initial_traces is None:
            initial_traces = [()] * n
        if len(initial_traces) != n:
            raise ValueError(f"{n} components but {len(initial_traces)} initial driver traces")
        self.components = tuple(components)
        self.feedbacks = tuple(feedbacks)
        self.initial_traces = tuple(tuple(t) for t in initial_traces)
        self.multi_step = multi_step
        self.alphabet = alphabet if alphabet is not None else ANY
        self.name = name
        for i, (y, t) in enumerate(zip(self.components, self.initial_traces)):
            if not is_trace(t):
                raise FeedbackError(f"initial driver {t!r} is not a trace", i)
            for ev in t:
                if ev not in y.alphabet:
                    raise FeedbackError(f"initial driver event {ev!r} outside the component alphabet", i, ev)

    def actions(self, e: Event, outputs: tuple) -> list[tuple]:
        """What each driver appends on ``e`` given the current outputs."""
        acts = []
        for i, (phi, y) in enumerate(zip(self.feedbacks, self.components)):
            try:
                act = normalize_action(phi(e, outputs))
            except AlphabetViolation:
                raise
            except CalcError as exc:
                raise FeedbackError(str(exc), i) from None
            if len(act) > 1 and not self.multi_step:
                raise FeedbackError(f"sequence action {act!r} needs a multi-step product", i)
            for ev in act:
                if ev not in y.alphabet:
                    raise FeedbackError(f"feedback produced {ev!r}, outside the component alphabet", i, ev)
            acts.append(act)
        return acts

    def start(self):
        return tuple(y._fold(t) for y, t in zip(self.components, self.initial_traces))

    def advance(self, state, e):
        outputs = self.read(state)
        acts = self.actions(e, outputs)
        return tuple(y._fold(act, s) for y, act, s in zip(self.components, acts, state))

    def read(self, state):
        return tuple(y.read(s) for y, s in zip(self.components, state))

    def drivers(self, w: Sequence[Event]) -> tuple:
        """The driver traces ``(u_1, ..., u_n)`` after ``w``."""
        us, _ = self._drive(tuple(w))
        return us

    def _drive(self, w):
        # g_i(nulls) = initial_i ; g_i(w.e) = g_i(w) . phi_i(e, f_1(g_1(w)), ..., f_n(g_n(w)))
        us = [list(t) for t in self.initial_traces]
        states = [y._fold(t) for y, t in zip(self.components, self.initial_traces)]
        for i, e in enumerate(w):
            outputs = tuple(y.read(s) for y, s in zip(self.components, states))
            try:
                acts = self.actions(e, outputs)
            except CalcError as exc:
                raise exc.locate(i)
            for j, act in enumerate(acts):
                us[j].extend(act)
                states[j] = self.components[j]._fold(act, states[j])
        return tuple(tuple(u) for u in us), states

    def _eval(self, w):
        us, _ = self._drive(w)
        return tuple(y._eval(u) for y, u in zip(self.components, us))


def general_product(components, feedbacks, initial_driver_traces=None, alphabet=None, name="product"):
    """Each feedback map returns None (hold) or one Event per outer event."""
    return ProductVariable(components, feedbacks, initial_driver_traces, False, alphabet, name)


def multi_step_product(components, feedbacks, initial_driver_traces=None, alphabet=None, name="product"):
    """Feedback maps may return finite event sequences; drivers grow by concatenation."""
    return ProductVariable(components, feedbacks, initial_driver_traces, True, alphabet, name)


def _sliced(phi, i):
    return lambda e, outputs: phi(e, outputs[i:])


def cascade_product(components, feedbacks, initial_driver_traces=None, alphabet=None, multi_step=False, name="cascade"):
    """Loop-free product: feedback map ``i`` (0-based) only receives ``outputs[i:]``."""
    wrapped = [_sliced(phi, i) for i, phi in enumerate(feedbacks)]
    return ProductVariable(components, wrapped, initial_driver_traces, multi_step, alphabet, name)


# -- registers -----------------------------------------------------------------

LOAD = "load"


def cell(fill=NULLV) -> StateVariable:
    """A storage cell: holds the payload of the last ``load`` event."""
    return define(Alphabet({LOAD: lambda v: True}), fill, lambda v, e: e.payload, name="cell")


def shift_in(v) -> Event:
    return Event("shift", v)


def shift(r: int, v) -> Event:
    return Event("shift", (r, v))


def shift_register(n: int, fill=NULLV) -> ProductVariable:
    """Shift-right register of ``n`` cells; ``shift[v]`` enters at cell 1.

    Cell 1 loads the input, cell ``i > 1`` loads the pre-event value of
    cell ``i - 1``.
    """
    if n < 1:
        raise ValueError("a register needs at least one cell")

    def feed(i):
        if i == 0:
            return lambda e, outs: Event(LOAD, e.payload)
        return lambda e, outs: Event(LOAD, outs[i - 1])

    return general_product(
        [cell(fill) for _ in range(n)],
        [feed(i) for i in range(n)],
        alphabet=Alphabet({"shift": lambda v: True}),
        name=f"shift_register[{n}]",
    )


def _direction(e: Event):
    payload = e.payload
    if not (isinstance(payload, tuple) and len(payload) == 2):
        raise InvalidEventError(e, detail="expected payload (r, v)")
    r, v = payload
    if r not in (1, -1) or isinstance(r, bool):
        raise InvalidEventError(e, detail="direction must be +1 or -1")
    return r, v


def bidirectional_register(n: int, fill=NULLV) -> ProductVariable:
    """Register shifting right on ``shift[(1, v)]`` and left on ``shift[(-1, v)]``.

    Cell ``i`` (1-based) loads the pre-event value of cell ``i - r`` when
    that index is in ``1..n`` and loads ``v`` otherwise.
    """
    if n < 1:
        raise ValueError("a register needs at least one cell")

    def feed(i):
        def phi(e, outs):
            r, v = _direction(e)
            src = i - r
            return Event(LOAD, outs[src - 1] if 1 <= src <= n else v)

        return phi

    return general_product(
        [cell(fill) for _ in range(n)],
        [feed(i) for i in range(1, n + 1)],
        alphabet=Alphabet({"shift": lambda p: isinstance(p, tuple) and len(p) == 2}),
        name=f"bidirectional_register[{n}]",
    )


# -- finite-state check ----------------------------------------------------------


class FiniteStateReport(NamedTuple):
    finite: bool
    state_count: int
    minimal_count: int | None

    def __bool__(self):
        return self.finite


def is_finite_state(p: StateVariable, event_basis, bound: int) -> FiniteStateReport:
    """Lower ``p`` and close its reachable states over the basis within ``bound``.

    An incomplete closure is reported, not raised.
    """
    m = to_machine(p)
    reach = reachable(m, event_basis, bound)
    if not reach.complete:
        return FiniteStateReport(False, len(reach.states), None)
    _, part = minimize(m, event_basis, bound)
    return FiniteStateReport(True, len(reach.states), len(part.classes))
