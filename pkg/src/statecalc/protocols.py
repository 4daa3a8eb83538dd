"""Commit protocols over the broadcast network, with soundness monitors.

Two ways for a node to learn that every member of a group ``G`` has a data
message:

* per-message acks: each node ``n`` may send ``ack[(d, n)]`` only after
  receiving ``d``, and anyone may relay an ack it received;
  ``commit_simple`` holds when acks from all of ``G`` are in hand;
* cyclic acks: data and acks carry sequence numbers, ack ``i`` is
  originated only by ``pi(i mod k)``, and only once all earlier data and
  acks have been received; ``ack[i + k]`` then witnesses a full cycle
  of receipt of ``data[i]``.

Behaviors are permission sets; a policy from :mod:`statecalc.net` picks
among permitted messages. Faulty subclasses widen the permission set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

from .errors import ScheduleError
from .net import (
    Message,
    NetworkState,
    NodeBehavior,
    NodeView,
    Violation,
    data,
    is_message,
)
from .values import NULLM, encode, sort_key


@dataclass(frozen=True)
class GroupConfig:
    """Group members in turn order: ``pi(j) = order[j]`` for ``j`` in ``0..k-1``."""

    order: tuple

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(self.order))
        if not self.order:
            raise ValueError("group must be nonempty")
        if len(set(self.order)) != len(self.order):
            raise ValueError(f"turn order {self.order!r} repeats a node; pi must be a bijection")

    @property
    def k(self) -> int:
        return len(self.order)

    @property
    def members(self) -> frozenset:
        return frozenset(self.order)

    def pi(self, j: int):
        return self.order[j % self.k]


def simple_ack(d, n) -> Message:
    return Message("ack", (d, n))


def seq_ack(i: int) -> Message:
    return Message("ack", i)


# -- per-message acks ------------------------------------------------------------


def simple_ack_allowed(view: NodeView, m: Message) -> bool:
    """``T = ack[(d, n)]`` only if ``d`` received and (``Id = n`` or the ack was received)."""
    d, n = m.id
    return data(d) in view.R and (view.id == n or m in view.R)


class SimpleAckBehavior(NodeBehavior):
    protocol = "simple-ack"

    def allowed(self, view):
        allowed = set(super().allowed(view))
        have = {m.id for m in view.R if m.kind == "data"}
        allowed.update(simple_ack(d, view.id) for d in have)
        allowed.update(m for m in view.R if m.kind == "ack" and m.id[0] in have)
        return allowed


class AckWithoutData(SimpleAckBehavior):
    """Faulty: acknowledges any data it has merely seen an ack for."""

    fault = "ack-without-data"

    def allowed(self, view):
        extra = {simple_ack(m.id[0], view.id) for m in view.R if m.kind == "ack"}
        return super().allowed(view) | extra


def commit_simple(cfg: GroupConfig, m, R_n) -> bool:
    """All of ``G`` have acknowledged data ``m``."""
    return all(simple_ack(m, n) in R_n for n in cfg.order)


def check_ack_lemma(st: NetworkState) -> Violation | None:
    """``ack[(d, n2)]`` in ``R(n)`` implies ``data[d]`` in ``R(n2)``."""
    views = st.views
    bad = [
        (n, m)
        for n in st.names
        for m in views[n].R
        if m.kind == "ack" and m.id[1] in views and Message("data", m.id[0]) not in views[m.id[1]].R
    ]
    if not bad:
        return None
    # set order depends on the hash seed; pick the witness by a total order
    n, m = min(bad, key=lambda b: (st.names.index(b[0]), sort_key(b[1])))
    return Violation("ack_lemma", {"node": n, "data": encode(m.id[0]), "acker": m.id[1]})


def check_simple_commit(st: NetworkState, cfg: GroupConfig) -> Violation | None:
    """Whenever ``commit_simple`` holds at some node, every group member has the data."""
    bad = []
    for n in st.names:
        R = st.views[n].R
        for d in {m.id[0] for m in R if m.kind == "ack"}:
            if commit_simple(cfg, d, R):
                bad.extend((n, d, n2) for n2 in cfg.order if data(d) not in st.views[n2].R)
    if not bad:
        return None
    n, d, n2 = min(bad, key=lambda b: (st.names.index(b[0]), sort_key(b[1]), cfg.order.index(b[2])))
    return Violation("simple_commit", {"node": n, "data": encode(d), "missing": n2})


def _arrivals(st: NetworkState, kind: str):
    """``(node, message)`` for every ``rx`` of a ``kind`` message in the last step, in node order."""
    out = []
    for n in st.names:
        ev = st.appended.get(n)
        if ev is not None and ev.name == "rx" and is_message(ev.payload) and ev.payload.kind == kind:
            out.append((n, ev.payload))
    return out


def ack_lemma_step(st: NetworkState) -> Violation | None:
    """Incremental :func:`check_ack_lemma`, looking only at acks received in the last step.

    Receive sets only grow, so a state that was clean before the step can
    only turn dirty through a new arrival.
    """
    for n, m in _arrivals(st, "ack"):
        d, n2 = m.id
        if n2 in st.views and data(d) not in st.views[n2].R:
            return Violation("ack_lemma", {"node": n, "data": encode(d), "acker": n2})
    return None


def simple_commit_step(st: NetworkState, cfg: GroupConfig) -> Violation | None:
    """Incremental :func:`check_simple_commit`."""
    for n, m in _arrivals(st, "ack"):
        d = m.id[0]
        if commit_simple(cfg, d, st.views[n].R):
            for n2 in cfg.order:
                if data(d) not in st.views[n2].R:
                    return Violation("simple_commit", {"node": n, "data": encode(d), "missing": n2})
    return None


# -- cyclic acks -----------------------------------------------------------------


def _complete_prefix(R) -> int:
    """Largest ``p`` with ``data[j]`` and ``ack[j]`` in ``R`` for every ``j < p``."""
    p = 0
    while data(p) in R and seq_ack(p) in R:
        p += 1
    return p


def cyclic_ack_allowed(view: NodeView, m: Message, cfg: GroupConfig) -> bool:
    i = m.id
    R = view.R
    if not (cfg.pi(i) == view.id or m in R):
        return False
    if data(i) not in R:
        return False
    return _complete_prefix(R) >= i


class CyclicAckBehavior(NodeBehavior):
    protocol = "cyclic-ack"

    def __init__(self, name, cfg: GroupConfig, plan=(), policy="eager"):
        super().__init__(name, plan, policy)
        self.cfg = cfg

    def allowed(self, view):
        allowed = set(super().allowed(view))
        R = view.R
        top = _complete_prefix(R)
        for i in range(top + 1):
            a = seq_ack(i)
            if data(i) in R and (self.cfg.pi(i) == view.id or a in R):
                allowed.add(a)
        return allowed


class OutOfTurnAck(CyclicAckBehavior):
    """Faulty: acks any sequence number whose data it holds, ignoring turn and completeness."""

    fault = "out-of-turn-ack"

    def allowed(self, view):
        extra = {seq_ack(m.id) for m in view.R if m.kind == "data"}
        return super().allowed(view) | extra


def commit_cyclic(cfg: GroupConfig, i: int, R_n) -> bool:
    return seq_ack(i + cfg.k) in R_n


def check_cyclic_soundness(st: NetworkState, cfg: GroupConfig) -> Violation | None:
    """``ack[i + k]`` in any ``R(n)`` implies ``data[i]`` in ``R(n2)`` for all ``n2`` in ``G``."""
    k = cfg.k
    bad = [
        (n, m.id - k, n2)
        for n in st.names
        for m in st.views[n].R
        if m.kind == "ack" and m.id >= k
        for n2 in cfg.order
        if Message("data", m.id - k) not in st.views[n2].R
    ]
    if not bad:
        return None
    n, i, n2 = min(bad, key=lambda b: (st.names.index(b[0]), b[1], cfg.order.index(b[2])))
    return Violation("cyclic_soundness", {"node": n, "seq": i, "missing": n2})


def cyclic_soundness_step(st: NetworkState, cfg: GroupConfig) -> Violation | None:
    """Incremental :func:`check_cyclic_soundness`."""
    for n, m in _arrivals(st, "ack"):
        i = m.id - cfg.k
        if i < 0:
            continue
        for n2 in cfg.order:
            if data(i) not in st.views[n2].R:
                return Violation("cyclic_soundness", {"node": n, "seq": i, "missing": n2})
    return None


def check_unique_sequence(st: NetworkState) -> Violation | None:
    """No sequence number is originated by two nodes."""
    owner = {}
    for n in st.names:
        for m in st.views[n].originated:
            if m.id in owner and owner[m.id] != n:
                return Violation("unique_sequence", {"seq": encode(m.id), "nodes": [owner[m.id], n]})
            owner[m.id] = n
    return None


class TurnMonitor:
    """The first network-wide ``tx`` of ``ack[i]`` must come from ``pi(i mod k)``."""

    def __init__(self, cfg: GroupConfig):
        self.cfg = cfg
        self.first: dict[int, Any] = {}

    def check(self, st: NetworkState) -> Violation | None:
        m = st.message
        if m is None or m.kind != "ack" or m.id in self.first:
            return None
        self.first[m.id] = st.transmitter
        if st.transmitter != self.cfg.pi(m.id):
            return Violation(
                "turn_discipline",
                {"seq": m.id, "sender": st.transmitter, "turn": self.cfg.pi(m.id)},
            )
        return None


def check_turns_in_log(records: Sequence[dict], cfg: GroupConfig) -> Violation | None:
    """Structural turn check over trace-log step records."""
    seen = set()
    for rec in records:
        msg = rec.get("message")
        if not msg or "msg" not in msg or msg["msg"][0] != "ack":
            continue
        i = msg["msg"][1]
        if i in seen:
            continue
        seen.add(i)
        sender = rec["schedule"]["tx"]
        if sender != cfg.pi(i):
            return Violation("turn_discipline", {"seq": i, "sender": sender, "turn": cfg.pi(i)})
    return None


# -- shared checks -----------------------------------------------------------------


def check_transmit_constraint(st: NetworkState, cfg: GroupConfig | None, exempt=frozenset()) -> Violation | None:
    """Compliant nodes only ever hold a protocol-permitted ack in ``T``.

    Nodes in ``exempt`` (declared faulty) are skipped; their faults are for
    the lemma monitors to catch.
    """
    for n in st.names:
        if n in exempt:
            continue
        b = st.behaviors[n]
        t = st.views[n].T
        if t is NULLM or not is_message(t) or t.kind != "ack":
            continue
        if b.protocol == "simple-ack":
            ok = simple_ack_allowed(st.views[n], t)
        elif b.protocol == "cyclic-ack":
            ok = cyclic_ack_allowed(st.views[n], t, cfg)
        else:
            ok = False
        if not ok:
            return Violation("transmit_constraint", {"node": n, "T": encode(t)})
    return None


class SequenceAllocator:
    """Hands out globally unique sequence numbers and rejects reuse."""

    def __init__(self):
        self.used: dict[int, Any] = {}
        self.next = 0

    def claim(self, i: int, origin):
        if not isinstance(i, int) or isinstance(i, bool) or i < 0:
            raise ScheduleError(f"sequence number {i!r} must be a non-negative integer")
        if i in self.used:
            raise ScheduleError(f"sequence number {i} already originated by {self.used[i]!r}")
        self.used[i] = origin
        return i

    def allocate(self, origin) -> int:
        while self.next in self.used:
            self.next += 1
        return self.claim(self.next, origin)


FAULTS = {
    "ack-without-data": ("simple-ack", AckWithoutData),
    "out-of-turn-ack": ("cyclic-ack", OutOfTurnAck),
}


def make_behavior(protocol: str, name, cfg: GroupConfig | None, plan=(), policy="eager", fault=None) -> NodeBehavior:
    if fault is not None:
        if fault not in FAULTS:
            raise ValueError(f"unknown fault {fault!r}; choose from {sorted(FAULTS)}")
        proto, cls = FAULTS[fault]
        if proto != protocol:
            raise ValueError(f"fault {fault!r} applies to protocol {proto!r}, not {protocol!r}")
    else:
        cls = {"none": NodeBehavior, "simple-ack": SimpleAckBehavior, "cyclic-ack": CyclicAckBehavior}.get(protocol)
        if cls is None:
            raise ValueError(f"unknown protocol {protocol!r}")
    if protocol == "cyclic-ack":
        return cls(name, cfg, plan, policy)
    return cls(name, plan, policy)


def commits(st: NetworkState, protocol: str, cfg: GroupConfig | None) -> dict:
    """Per node, the data ids (simple) or sequence numbers (cyclic) it can commit."""
    out = {}
    for n in st.names:
        R = st.views[n].R
        if protocol == "simple-ack":
            ids = {m.id[0] for m in R if m.kind == "ack"}
            out[n] = sorted((d for d in ids if commit_simple(cfg, d, R)), key=sort_key)
        elif protocol == "cyclic-ack":
            out[n] = sorted(m.id - cfg.k for m in R if m.kind == "ack" and m.id >= cfg.k)
        else:
            out[n] = []
    return out
