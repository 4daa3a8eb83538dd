"""Unreliable broadcast network built from per-node local traces.

Each node ``n`` is a component driven by its own local trace ``u_n``, which
starts as ``(id[n],)``. A network step appends at most one event to each
local trace: ``tx`` for the single transmitter, ``rx[m]`` for the receivers
of its message, and an optional behavior-chosen local event for everyone
else. Receivers are any subset of the other nodes, so broadcasts are lossy,
but an ``rx[m]`` is never appended without a matching ``tx`` of ``m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Mapping, NamedTuple, Sequence

from .errors import ScheduleError, SpuriousReceiveError
from .values import NULLM, Event, encode, register_record, sort_key
from .variables import StateVariable, define


class Message(NamedTuple):
    kind: str  # "data" or "ack"
    id: Any

    def __repr__(self):
        return f"{self.kind}[{self.id!r}]"


register_record(Message, "msg", lambda m: [m.kind, m.id], lambda f: Message(f[0], f[1]))


def data(d) -> Message:
    return Message("data", d)


def is_message(x) -> bool:
    return isinstance(x, Message)


TX = Event("tx")


def rx(m: Message) -> Event:
    return Event("rx", m)


def ident(name) -> Event:
    return Event("id", name)


def want(m) -> Event:
    """Local event that sets the transmit variable ``T``."""
    return Event("want", m)


def originate(m: Message) -> Event:
    """Local event: the application hands the node a message of its own."""
    return Event("originate", m)


# -- node variables ----------------------------------------------------------


def identity_variable() -> StateVariable:
    return define(None, None, lambda v, e: e.payload if v is None and e.name == "id" else v, name="Id")


def transmit_variable() -> StateVariable:
    return define(None, NULLM, lambda t, e: e.payload if e.name == "want" else t, name="T")


def received_variable() -> StateVariable:
    """``R``: grows by ``{m}`` exactly on ``rx[m]``."""
    return define(
        None,
        frozenset(),
        lambda r, e: r | {e.payload} if e.name == "rx" and is_message(e.payload) else r,
        name="R",
    )


def sent_variable(transmit: StateVariable | None = None) -> StateVariable:
    """``S``: grows by ``{T}`` on ``tx`` when the pre-event ``T`` is a message."""
    transmit = transmit if transmit is not None else transmit_variable()
    return define(
        None,
        frozenset(),
        lambda s, e, t: s | {t} if e.name == "tx" and is_message(t) else s,
        reads=transmit,
        name="S",
    )


class NodeView(NamedTuple):
    id: Any
    T: Any
    R: frozenset
    S: frozenset
    originated: frozenset
    tx_count: int


class NodeVariable(StateVariable):
    """All node variables advanced together, one incremental state per node."""

    name = "node"

    def start(self):
        return NodeView(None, NULLM, frozenset(), frozenset(), frozenset(), 0)

    def advance(self, v: NodeView, e: Event) -> NodeView:
        name = e.name
        if name == "rx" and is_message(e.payload):
            return v._replace(R=v.R | {e.payload})
        if name == "tx":
            sent = v.S | {v.T} if is_message(v.T) else v.S
            return v._replace(S=sent, tx_count=v.tx_count + 1)
        if name == "want":
            return v._replace(T=e.payload)
        if name == "originate":
            return v._replace(originated=v.originated | {e.payload})
        if name == "id" and v.id is None:
            return v._replace(id=e.payload)
        return v

    def read(self, state):
        return state


NODE = NodeVariable()


# -- behaviors ---------------------------------------------------------------


@lru_cache(maxsize=None)
def _message_order(m: Message):
    return (m.kind != "data", sort_key(m.id))


def eager(view: NodeView, permitted: frozenset):
    """Lowest permitted message not yet sent, data before acks; nullm if none."""
    pending = [m for m in permitted if m not in view.S]
    return min(pending, key=_message_order) if pending else NULLM


def persistent(view: NodeView, permitted: frozenset):
    """Like eager, but once everything is sent keep cycling through permitted messages."""
    first = eager(view, permitted)
    if first is not NULLM or not permitted:
        return first
    ordered = sorted(permitted, key=_message_order)
    return ordered[view.tx_count % len(ordered)]


POLICIES: dict[str, Callable] = {"eager": eager, "persistent": persistent}


class NodeBehavior:
    """Flooding node: transmits its own data and relays data it has received.

    Subclasses widen :meth:`permitted` with protocol acks. The policy picks
    one permitted message as the next value of ``T``.
    """

    protocol = "none"
    fault: str | None = None

    def __init__(self, name, plan: Sequence[tuple[int, Message]] = (), policy="eager"):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}; choose from {sorted(POLICIES)}")
        self.name = name
        self.plan = tuple(sorted(plan, key=lambda p: (p[0], _message_order(p[1]))))
        self.policy = policy
        self._choose = POLICIES[policy]
        self._memo = None

    def permitted(self, view: NodeView) -> frozenset:
        """Messages this node may hold in ``T``; a function of ``R`` and ``originated``."""
        memo = self._memo
        if memo is not None and memo[0] is view.R and memo[1] is view.originated:
            return memo[2]
        result = frozenset(self.allowed(view))
        self._memo = (view.R, view.originated, result)
        return result

    def allowed(self, view: NodeView):
        return view.originated | {m for m in view.R if m.kind == "data"}

    def local_event(self, view: NodeView, step: int) -> Event | None:
        for at, m in self.plan:
            if at <= step and m not in view.originated:
                return originate(m)
        desired = self._choose(view, self.permitted(view))
        if desired != view.T:
            return want(desired)
        return None

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


# -- network state ---------------------------------------------------------------


class LocalTrace:
    """Persistent append-only event list: appending is O(1) and shares the prefix."""

    __slots__ = ("prev", "event", "length")

    def __init__(self, prev=None, event=None):
        self.prev = prev
        self.event = event
        self.length = 0 if prev is None and event is None else (prev.length if prev else 0) + 1

    def append(self, e: Event) -> "LocalTrace":
        return LocalTrace(self, e)

    def __len__(self):
        return self.length

    def events(self) -> tuple:
        out = []
        node = self
        while node is not None and node.length:
            out.append(node.event)
            node = node.prev
        return tuple(reversed(out))


class ScheduleEntry(NamedTuple):
    """One network step: transmitter, its receivers, and the nodes taking a local action.

    ``local=None`` means every node not transmitting or receiving.
    """

    transmitter: Any = None
    receivers: tuple = ()
    local: tuple | None = None

    def to_json(self) -> dict:
        out = {"tx": self.transmitter, "rx": list(self.receivers)}
        if self.local is not None:
            out["local"] = list(self.local)
        return out

    @classmethod
    def from_json(cls, d: Mapping) -> "ScheduleEntry":
        local = d.get("local")
        return cls(d.get("tx"), tuple(d.get("rx", ())), None if local is None else tuple(local))


@dataclass(frozen=True, eq=False)
class NetworkState:
    names: tuple
    behaviors: Mapping[Any, NodeBehavior]
    traces: Mapping[Any, LocalTrace]
    views: Mapping[Any, NodeView]
    step_count: int = 0
    appended: Mapping[Any, Event] = field(default_factory=dict)
    message: Message | None = None  # what was transmitted in the step that produced this state
    transmitter: Any = None

    def view(self, n) -> NodeView:
        return self.views[n]

    def trace(self, n) -> tuple:
        return self.traces[n].events()


def init_network(names: Sequence, behaviors: Mapping[Any, NodeBehavior]) -> NetworkState:
    """Every local trace starts as ``(id[n],)``."""
    names = tuple(names)
    if not names:
        raise ValueError("a network needs at least one node")
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate node names in {names!r}")
    missing = [n for n in names if n not in behaviors]
    if missing:
        raise ValueError(f"no behavior for nodes {missing!r}")
    traces = {n: LocalTrace().append(ident(n)) for n in names}
    views = {n: NODE.advance(NODE.start(), ident(n)) for n in names}
    return NetworkState(names, dict(behaviors), traces, views)


def network_step(st: NetworkState, entry: ScheduleEntry) -> NetworkState:
    tx, receivers = entry.transmitter, tuple(entry.receivers)
    names = set(st.names)
    m = None
    if tx is not None:
        if tx not in names:
            raise ScheduleError(f"transmitter {tx!r} is not a node")
        m = st.views[tx].T
        if not is_message(m):
            raise ScheduleError(f"node {tx!r} was scheduled to transmit but T = {m!r}")
    elif receivers:
        raise SpuriousReceiveError(f"receivers {list(receivers)!r} scheduled with no transmitter")
    for r in receivers:
        if r not in names:
            raise ScheduleError(f"receiver {r!r} is not a node")
        if r == tx:
            raise ScheduleError(f"node {r!r} cannot receive its own broadcast")
    if len(set(receivers)) != len(receivers):
        raise ScheduleError("duplicate receivers")

    appended: dict = {}
    if tx is not None:
        appended[tx] = TX
        for r in receivers:
            appended[r] = rx(m)
    local = entry.local if entry.local is not None else [n for n in st.names if n not in appended]
    for n in local:
        if n not in names:
            raise ScheduleError(f"local actor {n!r} is not a node")
        if n in appended:
            raise ScheduleError(f"node {n!r} already takes a network event this step")
        ev = st.behaviors[n].local_event(st.views[n], st.step_count)
        if ev is not None:
            appended[n] = ev

    traces = dict(st.traces)
    views = dict(st.views)
    for n, ev in appended.items():
        traces[n] = traces[n].append(ev)
        views[n] = NODE.advance(views[n], ev)
    return NetworkState(st.names, st.behaviors, traces, views, st.step_count + 1, appended, m, tx)


def inject_event(st: NetworkState, node, event: Event) -> NetworkState:
    """Append an event to one local trace with no axiom checks. For negative tests only."""
    traces = dict(st.traces)
    views = dict(st.views)
    traces[node] = traces[node].append(event)
    views[node] = NODE.advance(views[node], event)
    return NetworkState(st.names, st.behaviors, traces, views, st.step_count + 1, {node: event}, None, None)


def random_schedule(st: NetworkState, rng, delivery_probability: float = 0.5) -> ScheduleEntry:
    """Adversary drawing from ``rng.random()`` only.

    One draw picks the transmitter uniformly among nodes whose ``T`` is a
    message, with "nobody" as one more choice; then one draw per other node
    (in name order) includes it as a receiver when below
    ``delivery_probability``. The quiet choice matters: nodes that transmit
    or receive take no local action that step, so without it a lone
    transmitter could be picked forever and nobody would update ``T``.
    """
    if not 0.0 <= delivery_probability <= 1.0:
        raise ValueError("delivery probability must be in [0, 1]")
    options = [n for n in st.names if is_message(st.views[n].T)] + [None]
    tx = options[int(rng.random() * len(options))]
    receivers = []
    for n in st.names:
        if n == tx:
            continue
        if rng.random() < delivery_probability and tx is not None:
            receivers.append(n)
    return ScheduleEntry(tx, tuple(receivers), None)


# -- derived sets and monitors -------------------------------------------------------


class DerivedSets(NamedTuple):
    R: dict
    S: dict


def derived_sets(st: NetworkState) -> DerivedSets:
    """R and S recomputed from scratch by folding their recursions over each local trace."""
    R_var, S_var = received_variable(), sent_variable()
    R, S = {}, {}
    for n in st.names:
        u = st.trace(n)
        R[n] = R_var.eval(u)
        S[n] = S_var.eval(u)
    return DerivedSets(R, S)


@dataclass(frozen=True)
class Violation:
    monitor: str
    witness: dict

    def to_json(self) -> dict:
        return {"monitor": self.monitor, "witness": self.witness}


def check_no_spurious(st: NetworkState) -> Violation | None:
    """Every received message is in some node's sent set."""
    sent = frozenset().union(*(v.S for v in st.views.values()))
    for n in st.names:
        extra = st.views[n].R - sent
        if extra:
            m = min(extra, key=_message_order)
            return Violation("no_spurious", {"node": n, "message": encode(m)})
    return None


def check_monotone(prev: NetworkState, st: NetworkState) -> Violation | None:
    for n in st.names:
        a, b = prev.views[n], st.views[n]
        if not (a.R <= b.R and a.S <= b.S):
            return Violation("monotone", {"node": n})
    return None


def check_step_bound(prev: NetworkState, st: NetworkState) -> Violation | None:
    for n in st.names:
        grew = len(st.traces[n]) - len(prev.traces[n])
        if grew not in (0, 1):
            return Violation("step_bound", {"node": n, "grew": grew})
    return None


def check_pairing(prev: NetworkState, st: NetworkState) -> Violation | None:
    """Each appended ``rx[m]`` coexists with a ``tx`` by a node whose pre-step ``T`` is ``m``."""
    for n, ev in st.appended.items():
        if ev.name != "rx":
            continue
        tx = st.transmitter
        ok = (
            tx is not None
            and st.appended.get(tx) == TX
            and prev.views[tx].T == ev.payload
        )
        if not ok:
            return Violation("pairing", {"node": n, "message": encode(ev.payload)})
    return None
