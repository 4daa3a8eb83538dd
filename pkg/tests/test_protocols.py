import json

import pytest

from statecalc.errors import ScheduleError
from statecalc.net import NodeView, ScheduleEntry, data, init_network, inject_event, network_step, originate, rx, want
from statecalc.protocols import (
    AckWithoutData,
    CyclicAckBehavior,
    GroupConfig,
    OutOfTurnAck,
    SequenceAllocator,
    SimpleAckBehavior,
    TurnMonitor,
    check_ack_lemma,
    check_cyclic_soundness,
    check_simple_commit,
    check_transmit_constraint,
    check_turns_in_log,
    check_unique_sequence,
    commit_cyclic,
    commit_simple,
    commits,
    cyclic_ack_allowed,
    make_behavior,
    seq_ack,
    simple_ack,
    simple_ack_allowed,
)
from statecalc.scenario import load_scenario, run_scenario
from statecalc.values import NULLM

CFG = GroupConfig(("a", "b", "c"))


def view(name, R=(), originated=()):
    return NodeView(name, NULLM, frozenset(R), frozenset(), frozenset(originated), 0)


def test_group_config():
    assert CFG.k == 3 and CFG.pi(4) == "b" and CFG.members == {"a", "b", "c"}
    with pytest.raises(ValueError):
        GroupConfig(("a", "a"))
    with pytest.raises(ValueError):
        GroupConfig(())


# -- per-message acks ----------------------------------------------------------------


def test_simple_ack_own_ack_after_data():
    v = view("b", [data("d")])
    assert simple_ack("d", "b") in SimpleAckBehavior("b").permitted(v)
    assert simple_ack_allowed(v, simple_ack("d", "b"))
    assert not simple_ack_allowed(v, simple_ack("d", "c"))


def test_simple_ack_relay():
    a = simple_ack("d", "b")
    v = view("c", [data("d"), a])
    assert a in SimpleAckBehavior("c").permitted(v) and simple_ack_allowed(v, a)
    # holding the ack without the data is not enough to relay it
    assert a not in SimpleAckBehavior("c").permitted(view("c", [a]))


def test_empty_receive_set_permits_no_ack():
    own = data("x")
    got = SimpleAckBehavior("a").permitted(view("a", originated=[own]))
    assert got == {own}
    assert SimpleAckBehavior("a").permitted(view("a")) == frozenset()


def test_ack_without_data_widens_permission():
    v = view("c", [simple_ack("d", "b")])
    assert simple_ack("d", "c") in AckWithoutData("c").permitted(v)
    assert simple_ack("d", "c") not in SimpleAckBehavior("c").permitted(v)


def test_commit_simple_definition():
    R = {simple_ack("d", n) for n in "abc"}
    assert commit_simple(CFG, "d", R)
    assert not commit_simple(CFG, "d", R - {simple_ack("d", "b")})
    assert not commit_simple(CFG, "e", R)


def test_permitted_is_recomputed_when_sets_change():
    b = SimpleAckBehavior("b")
    assert b.permitted(view("b")) == frozenset()
    assert simple_ack("d", "b") in b.permitted(view("b", [data("d")]))


def _simple_net(names=("a", "b", "c")):
    return init_network(names, {n: SimpleAckBehavior(n) for n in names})


def test_ack_lemma_and_commit_monitors_on_hand_built_state():
    st = _simple_net()
    assert check_ack_lemma(st) is None and check_simple_commit(st, CFG) is None
    bad = inject_event(st, "a", rx(simple_ack("d", "c")))
    assert check_ack_lemma(bad).witness == {"node": "a", "data": "d", "acker": "c"}
    for n in "abc":
        bad = inject_event(bad, "a", rx(simple_ack("d", n)))
    assert check_simple_commit(bad, CFG).witness == {"node": "a", "data": "d", "missing": "a"}


def test_ack_without_data_fixture_is_detected():
    res = run_scenario(load_scenario("ack-without-data"))
    assert res.violation.monitor == "ack_lemma"
    assert res.violation.witness == {"node": "A", "data": "d", "acker": "C"}
    assert res.steps_run <= 10**4
    assert check_ack_lemma(res.final) is not None


# -- cyclic acks ----------------------------------------------------------------------


def test_cyclic_turn_zero():
    v = view("a", [data(0)])
    assert seq_ack(0) in CyclicAckBehavior("a", CFG).permitted(v)
    assert seq_ack(0) not in CyclicAckBehavior("b", CFG).permitted(view("b", [data(0)]))


def test_cyclic_completeness_rule():
    full = view("b", [data(0), data(1), seq_ack(0)])
    assert seq_ack(1) in CyclicAckBehavior("b", CFG).permitted(full)
    assert cyclic_ack_allowed(full, seq_ack(1), CFG)
    missing = view("b", [data(0), data(1), data(2)])
    assert seq_ack(1) not in CyclicAckBehavior("b", CFG).permitted(missing)
    assert not cyclic_ack_allowed(missing, seq_ack(1), CFG)


def test_cyclic_relay_needs_prefix():
    # c may relay ack[0] it received, but only once data[0] is in hand
    assert seq_ack(0) in CyclicAckBehavior("c", CFG).permitted(view("c", [data(0), seq_ack(0)]))
    assert seq_ack(0) not in CyclicAckBehavior("c", CFG).permitted(view("c", [seq_ack(0)]))


def test_out_of_turn_widens_permission():
    v = view("c", [data(5)])
    assert seq_ack(5) in OutOfTurnAck("c", CFG).permitted(v)
    assert seq_ack(5) not in CyclicAckBehavior("c", CFG).permitted(v)


def test_commit_cyclic_definition():
    assert commit_cyclic(CFG, 2, {seq_ack(5)})
    assert not commit_cyclic(CFG, 2, {seq_ack(4)})


def test_cyclic_soundness_on_hand_built_state():
    names = ("a", "b", "c")
    st = init_network(names, {n: CyclicAckBehavior(n, CFG) for n in names})
    assert check_cyclic_soundness(st, CFG) is None
    st = inject_event(st, "b", rx(seq_ack(2)))
    assert check_cyclic_soundness(st, CFG) is None
    st = inject_event(st, "c", rx(seq_ack(4)))
    assert check_cyclic_soundness(st, CFG).witness == {"node": "c", "seq": 1, "missing": "a"}


def test_out_of_turn_fixture_is_detected():
    res = run_scenario(load_scenario("out-of-turn-ack"))
    assert res.violation is not None
    assert res.violation.monitor in {"cyclic_soundness", "turn_discipline"}
    assert check_cyclic_soundness(res.final, GroupConfig(("A", "B", "C"))) is not None
    records = [json.loads(line) for line in res.lines[1:-1]]
    verdicts = records[-1]["verdicts"]
    assert verdicts["cyclic_soundness"] == {"node": "D", "seq": 0, "missing": "A"}
    assert verdicts["turn_discipline"] != "ok"


def _message_json(st):
    return None if st.message is None else {"msg": [st.message.kind, st.message.id]}


def test_turn_monitor_and_log_check_agree():
    names = ("a", "b", "c")
    behaviors = {n: CyclicAckBehavior(n, CFG, [(0, data(0))] if n == "a" else ()) for n in names}
    st = init_network(names, behaviors)
    mon = TurnMonitor(CFG)
    records = []
    quiet = ScheduleEntry()
    # a floods data[0]; b relays it back so a holds it in R; then a acks in turn
    for entry in [quiet, quiet, ScheduleEntry("a", ("b", "c")), quiet, quiet, ScheduleEntry("b", ("a",)), quiet, quiet]:
        st = network_step(st, entry)
        assert mon.check(st) is None
        records.append({"schedule": entry.to_json(), "message": _message_json(st)})
    assert st.view("a").T == seq_ack(0)
    st = network_step(st, ScheduleEntry("a", ("b",)))
    assert mon.check(st) is None
    records.append({"schedule": {"tx": "a", "rx": ["b"]}, "message": _message_json(st)})
    assert check_turns_in_log(records, CFG) is None
    forged = records + [{"schedule": {"tx": "c", "rx": []}, "message": {"msg": ["ack", 1]}}]
    assert check_turns_in_log(forged, CFG).witness == {"seq": 1, "sender": "c", "turn": "b"}


def test_transmit_constraint_exempts_faulty_nodes():
    names = ("a", "b", "c")
    st = init_network(names, {n: SimpleAckBehavior(n) for n in names})
    st = inject_event(st, "c", want(simple_ack("d", "c")))
    assert check_transmit_constraint(st, CFG).witness["node"] == "c"
    assert check_transmit_constraint(st, CFG, exempt={"c"}) is None


def test_unique_sequence_monitor():
    names = ("a", "b")
    st = init_network(names, {n: CyclicAckBehavior(n, GroupConfig(names)) for n in names})
    st = inject_event(st, "a", originate(data(0)))
    assert check_unique_sequence(st) is None
    st = inject_event(st, "b", originate(data(0)))
    assert check_unique_sequence(st).witness == {"seq": 0, "nodes": ["a", "b"]}


def test_sequence_allocator():
    alloc = SequenceAllocator()
    assert alloc.claim(1, "a") == 1
    assert [alloc.allocate("b") for _ in range(3)] == [0, 2, 3]
    with pytest.raises(ScheduleError):
        alloc.claim(2, "c")
    for bad in (-1, True, "3"):
        with pytest.raises(ScheduleError):
            alloc.claim(bad, "c")


def test_make_behavior():
    assert isinstance(make_behavior("simple-ack", "a", CFG), SimpleAckBehavior)
    assert isinstance(make_behavior("cyclic-ack", "a", CFG, fault="out-of-turn-ack"), OutOfTurnAck)
    with pytest.raises(ValueError):
        make_behavior("gossip", "a", CFG)
    with pytest.raises(ValueError):
        make_behavior("simple-ack", "a", CFG, fault="out-of-turn-ack")
    with pytest.raises(ValueError):
        make_behavior("simple-ack", "a", CFG, fault="crash")


def test_commits_report():
    st = _simple_net()
    for n in "abc":
        st = inject_event(st, "b", rx(simple_ack("d", n)))
    assert commits(st, "simple-ack", CFG) == {"a": [], "b": ["d"], "c": []}
    assert commits(st, "none", None) == {"a": [], "b": [], "c": []}
    cyc = inject_event(_simple_net(), "a", rx(seq_ack(4)))
    cyc = inject_event(cyc, "a", rx(seq_ack(2)))
    assert commits(cyc, "cyclic-ack", CFG)["a"] == [1]
