import random
from dataclasses import dataclass
from typing import Callable

import pytest

from statecalc.catalog import (
    DEQ,
    TICK,
    bounded_queue,
    connected_counters,
    connected_counters_cascade,
    connected_counters_product,
    enq,
    mod_counter,
    queue_variable,
    unbounded_counter,
)
from statecalc.product import (
    bidirectional_register,
    cascade_product,
    general_product,
    multi_step_product,
    shift,
    shift_in,
    shift_register,
)
from statecalc.values import Event
from statecalc.variables import constant

OTHER = Event("other")


@dataclass
class Fixture:
    name: str
    make: Callable
    events: tuple  # pool the random traces draw from
    basis: tuple | None = None  # finite exploration basis, None if not finite-state

    def sample(self, rng, max_len):
        return tuple(rng.choice(self.events) for _ in range(rng.randint(0, max_len)))


def _pair_counter():
    # two mod-3 counters, the second fed two ticks per outer event
    return multi_step_product(
        [mod_counter(3), mod_counter(3)],
        [lambda e, outs: e, lambda e, outs: (TICK, TICK)],
        name="pair",
    )


def _frozen():
    return cascade_product([mod_counter(4), mod_counter(2)], [lambda e, o: None, lambda e, o: None])


QUEUE_EVENTS = (enq("a"), enq("b"), DEQ, OTHER)
SHIFT_EVENTS = (shift_in("a"), shift_in("b"))
BIDIR_EVENTS = tuple(shift(r, v) for r in (1, -1) for v in ("a", "b"))

FIXTURES = [
    Fixture("mod_counter_3", lambda: mod_counter(3), (TICK, OTHER), (TICK,)),
    Fixture("mod_counter_1", lambda: mod_counter(1), (TICK,), (TICK,)),
    Fixture("unbounded_counter", unbounded_counter, (TICK, OTHER)),
    Fixture("connected_2", lambda: connected_counters(2), (TICK,), (TICK,)),
    Fixture("connected_3", lambda: connected_counters(3), (TICK, OTHER), (TICK,)),
    Fixture("connected_product_3", lambda: connected_counters_product(3), (TICK,), (TICK,)),
    Fixture("connected_cascade_3", lambda: connected_counters_cascade(3), (TICK,), (TICK,)),
    Fixture("queue", lambda: queue_variable({"a", "b"}), QUEUE_EVENTS),
    Fixture("bounded_queue_cq", lambda: bounded_queue(2, {"a", "b"}).cq, QUEUE_EVENTS),
    Fixture("high_water", lambda: bounded_queue(2, {"a", "b"}).high_water, QUEUE_EVENTS),
    Fixture("shift_register_3", lambda: shift_register(3), SHIFT_EVENTS, SHIFT_EVENTS),
    Fixture("bidir_register_3", lambda: bidirectional_register(3), BIDIR_EVENTS, BIDIR_EVENTS),
    Fixture("constant", lambda: constant("k"), (TICK, OTHER), (TICK,)),
    Fixture("multi_step_pair", _pair_counter, (TICK,), (TICK,)),
    Fixture("frozen_cascade", _frozen, (TICK,), (TICK,)),
    Fixture(
        "pass_through_product",
        lambda: general_product([mod_counter(5)], [lambda e, o: e]),
        (TICK, OTHER),
        (TICK,),
    ),
]

FINITE = [f for f in FIXTURES if f.basis is not None]


@pytest.fixture
def rng():
    return random.Random(20240601)


# -- acceptance reporting ----------------------------------------------------------

_CRITERIA: dict[int, tuple[str, list]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number, title = mark.args
    _, results = _CRITERIA.setdefault(number, (title, []))
    results.append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, results = _CRITERIA[number]
        verdict = "PASS" if results and all(results) else "FAIL"
        terminalreporter.write_line(f"{verdict}  criterion {number:>2}: {title} ({sum(results)}/{len(results)} checks)")
