"""State variables: values defined as functions of the event trace.

A variable is built from an initial value and an after-event rule
(:func:`define`), and new variables come from the three operators
(initial value, :func:`after`, :func:`substitute`) plus pointwise
:func:`combine`.

Every variable can be evaluated two ways:

* ``eval(w)`` follows the defining equations structurally, e.g. a
  substitution evaluates its driver to a trace and then evaluates the inner
  variable on that trace;
* ``start`` / ``advance`` / ``read`` consume one event at a time over a
  finite internal state, which is what :func:`to_machine` exposes.

The two routes are independent enough that checking them against each other
is a meaningful test of the lowering.
"""

from __future__ import annotations

from typing import Any, Callable, Sequence

from .errors import AlphabetViolation, CalcError, EvaluationError, SubstitutionError
from .machine import Alphabet, Machine
from .values import UNSPECIFIED, Event, is_trace

ANY = Alphabet.any()
_START = object()


class StateVariable:
    """Base class. Subclasses implement ``start``, ``advance``, ``read`` and ``_eval``."""

    alphabet: Alphabet = ANY
    name: str = ""

    def start(self):
        raise NotImplementedError

    def advance(self, state, e: Event):
        raise NotImplementedError

    def read(self, state):
        raise NotImplementedError

    def _eval(self, w: tuple):
        return self.read(self._fold(w))

    def _fold(self, w: tuple, state=_START):
        s = self.start() if state is _START else state
        for i, e in enumerate(w):
            try:
                s = self.advance(s, e)
            except CalcError as exc:
                raise exc.locate(i)
        return s

    def check_trace(self, w: Sequence[Event]):
        for i, e in enumerate(w):
            if e not in self.alphabet:
                raise AlphabetViolation(e, i)

    def eval(self, w: Sequence[Event] = ()):
        w = tuple(w)
        self.check_trace(w)
        try:
            return self._eval(w)
        except CalcError as exc:
            raise exc.locate(len(w))

    __call__ = eval

    def prefix_values(self, w: Sequence[Event]) -> list:
        """Values on every prefix of ``w``, ``len(w) + 1`` of them."""
        s = self.start()
        out = [self.read(s)]
        for e in w:
            s = self.advance(s, e)
            out.append(self.read(s))
        return out

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>" if self.name else f"<{type(self).__name__}>"


class Variable(StateVariable):
    """Base form: ``initial y = initial``, ``after e y = transition(y, e)``.

    With ``reads=z`` the rule also sees the pre-event value of ``z``:
    ``after e y = transition(y, e, z)``. That is how a variable refers to
    another variable of the same component (the sent-set reads the
    transmit variable, for instance).
    """

    def __init__(self, alphabet, initial, transition, reads: StateVariable | None = None, name=""):
        self.initial = initial
        self.transition = transition
        self.reads = reads
        self.name = name
        base = alphabet if alphabet is not None else ANY
        self.alphabet = base if reads is None else base & reads.alphabet

    def start(self):
        if self.reads is None:
            return self.initial
        return (self.reads.start(), self.initial)

    def advance(self, state, e):
        if self.reads is None:
            return self.transition(state, e)
        rs, v = state
        return (self.reads.advance(rs, e), self.transition(v, e, self.reads.read(rs)))

    def read(self, state):
        return state if self.reads is None else state[1]

    def _eval(self, w):
        # primitive recursion on words: F(nulls) = initial, F(w.e) = G(F(w), e)
        v = self.initial
        if self.reads is None:
            for i, e in enumerate(w):
                try:
                    v = self.transition(v, e)
                except CalcError as exc:
                    raise exc.locate(i)
            return v
        context = self.reads.prefix_values(w)
        for i, e in enumerate(w):
            try:
                v = self.transition(v, e, context[i])
            except CalcError as exc:
                raise exc.locate(i)
        return v


def normalize_action(action) -> tuple:
    """Hold (None or ()), a single Event, or a finite sequence of Events, as a tuple."""
    if action is None:
        return ()
    if isinstance(action, Event):
        return (action,)
    if isinstance(action, (tuple, list)) and all(isinstance(e, Event) for e in action):
        return tuple(action)
    raise SubstitutionError(f"driver action {action!r} is not an event or event sequence")


class TraceVariable(Variable):
    """A sequence-valued variable that only ever grows.

    ``after e u = concat(u, extend(z, e))`` where ``z`` is the pre-event value
    of the optional ``control`` variable and ``extend`` returns a hold, one
    event, or a finite event sequence.
    """

    def __init__(self, extend, control: StateVariable | None = None, initial=(), alphabet=None, name=""):
        self.extend = extend
        self.control = control if control is not None else constant(None)
        self.initial_trace = tuple(initial)
        if not is_trace(self.initial_trace):
            raise SubstitutionError(f"initial driver value {initial!r} is not a trace")
        super().__init__(
            alphabet,
            self.initial_trace,
            lambda u, e, z: u + normalize_action(extend(z, e)),
            reads=self.control,
            name=name,
        )

    def segment(self, control_state, e) -> tuple:
        return normalize_action(self.extend(self.control.read(control_state), e))


class Combined(StateVariable):
    def __init__(self, op, parts: Sequence[StateVariable], name=""):
        if not parts:
            raise ValueError("combine needs at least one variable")
        self.op = op
        self.parts = tuple(parts)
        self.name = name
        alpha = self.parts[0].alphabet
        for p in self.parts[1:]:
            alpha = alpha & p.alphabet
        self.alphabet = alpha

    def start(self):
        return tuple(p.start() for p in self.parts)

    def advance(self, state, e):
        return tuple(p.advance(s, e) for p, s in zip(self.parts, state))

    def _apply(self, values):
        try:
            return self.op(*values)
        except CalcError:
            raise
        except Exception as exc:
            raise EvaluationError(f"operator failed on {values!r}: {exc}") from exc

    def read(self, state):
        return self._apply([p.read(s) for p, s in zip(self.parts, state)])

    def _eval(self, w):
        return self._apply([p._eval(w) for p in self.parts])


class Shifted(StateVariable):
    """``after e0 y``: the value ``y`` would have after one more event ``e0``."""

    def __init__(self, inner: StateVariable, e0: Event):
        if e0 not in inner.alphabet:
            raise AlphabetViolation(e0, detail="after() needs an event of the variable's alphabet")
        self.inner = inner
        self.e0 = e0
        self.alphabet = inner.alphabet
        self.name = f"after[{e0!r}]{inner.name}"

    def start(self):
        return self.inner.start()

    def advance(self, state, e):
        return self.inner.advance(state, e)

    def read(self, state):
        return self.inner.read(self.inner.advance(state, self.e0))

    def _eval(self, w):
        return self.inner._eval(w + (self.e0,))


class Substituted(StateVariable):
    """``sub u y``: ``y`` evaluated on the trace that ``u`` holds.

    Lowering keeps only the inner variable's state, advanced by whatever the
    driver appends on each outer event, so a finite-state driver control and
    a finite-state inner variable give a finite-state result.
    """

    def __init__(self, driver: StateVariable, inner: StateVariable):
        self.driver = driver
        self.inner = inner
        self.alphabet = driver.alphabet
        self.name = f"sub[{driver.name}]{inner.name}"
        self._segmented = isinstance(driver, TraceVariable)

    def _feed(self, inner_state, events):
        for ev in events:
            if ev not in self.inner.alphabet:
                raise SubstitutionError(f"driver appended {ev!r}, outside the inner alphabet")
            inner_state = self.inner.advance(inner_state, ev)
        return inner_state

    def _check_value(self, value):
        if not is_trace(value):
            raise SubstitutionError(f"driver value {value!r} is not a trace")
        return value

    def start(self):
        if self._segmented:
            return (self.driver.control.start(), self._feed(self.inner.start(), self.driver.initial_trace))
        ds = self.driver.start()
        return (ds, self._feed(self.inner.start(), self._check_value(self.driver.read(ds))))

    def advance(self, state, e):
        ds, ys = state
        if self._segmented:
            seg = self.driver.segment(ds, e)
            return (self.driver.control.advance(ds, e), self._feed(ys, seg))
        old = self._check_value(self.driver.read(ds))
        ds2 = self.driver.advance(ds, e)
        new = self._check_value(self.driver.read(ds2))
        if new[: len(old)] == old:
            return (ds2, self._feed(ys, new[len(old):]))
        return (ds2, self._feed(self.inner.start(), new))

    def read(self, state):
        return self.inner.read(state[1])

    def _eval(self, w):
        t = self._check_value(self.driver._eval(w))
        try:
            self.inner.check_trace(t)
        except AlphabetViolation as exc:
            raise SubstitutionError(f"driver trace leaves the inner alphabet: {exc}") from None
        return self.inner._eval(t)


# -- the operators -----------------------------------------------------------


def define(alphabet, initial, transition, *, reads=None, name="") -> Variable:
    """Variable with ``initial y = initial`` and ``after e y = transition(y, e)``."""
    return Variable(alphabet, initial, transition, reads=reads, name=name)


def constant(k, alphabet=None) -> Variable:
    return Variable(alphabet, k, lambda v, e: v, name=f"const[{k!r}]")


def initial_of(y: StateVariable):
    return y.eval(())


def after(y: StateVariable, e: Event) -> StateVariable:
    return Shifted(y, e)


def substitute(u: StateVariable, y: StateVariable) -> StateVariable:
    return Substituted(u, y)


def combine(op: Callable, *ys: StateVariable, name="") -> StateVariable:
    return Combined(op, ys, name=name)


def trace_variable(extend, control=None, initial=(), alphabet=None, name="") -> TraceVariable:
    return TraceVariable(extend, control=control, initial=initial, alphabet=alphabet, name=name)


def recorder(alphabet=None) -> TraceVariable:
    """The identity driver: appends every event, so ``substitute(recorder(), y)`` is ``y``."""
    return TraceVariable(lambda _, e: e, alphabet=alphabet, name="record")


def restrict(y: StateVariable, defined: StateVariable) -> StateVariable:
    """``y`` where ``defined`` holds, the unspecified marker elsewhere."""
    return Combined(lambda v, ok: v if ok else UNSPECIFIED, (y, defined), name=y.name)


def project(y: StateVariable, index: int) -> StateVariable:
    return Combined(lambda t: t[index], (y,), name=f"{y.name}[{index}]")


def to_machine(y: StateVariable) -> Machine:
    """The generalized Moore machine whose extended output map is ``y``."""
    return Machine(alphabet=y.alphabet, initial=y.start(), step=y.advance, out=y.read, name=y.name)


def evaluate(y: StateVariable, w: Sequence[Event]) -> Any:
    return y.eval(w)
