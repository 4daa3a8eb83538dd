"""Scenario files, seeded runs with per-step monitors, trace logs and replay.

A scenario is a JSON object::

    {"protocol": "cyclic-ack", "nodes": ["a", "b", "c"],
     "group": ["a", "b", "c"], "steps": 10000, "seed": 42,
     "delivery": {"mode": "random", "p": 0.5},
     "faults": [{"node": "c", "kind": "out-of-turn-ack"}],
     "data_plan": [{"origin": "a", "id": 0, "step": 0}],
     "policy": "eager"}

``group`` is either a list (its order is the turn order) or
``{"members": [...], "order": [...]}``. Scripted delivery replaces the
random adversary: ``{"mode": "scripted", "entries": [{"tx": "a", "rx": ["b"]}, ...]}``.

A trace log is one JSON object per line: a header, one record per step, and
a footer. Records are serialized canonically, so equal runs give
byte-identical logs.
"""

from __future__ import annotations

import json
import random
from importlib import resources
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from . import __version__
from .errors import ScenarioError, ScheduleError
from .net import (
    NetworkState,
    ScheduleEntry,
    Violation,
    check_monotone,
    check_no_spurious,
    check_pairing,
    check_step_bound,
    data,
    init_network,
    network_step,
    random_schedule,
)
from .net import POLICIES
from .protocols import (
    FAULTS,
    GroupConfig,
    SequenceAllocator,
    TurnMonitor,
    ack_lemma_step,
    check_ack_lemma,
    check_cyclic_soundness,
    check_simple_commit,
    check_transmit_constraint,
    check_unique_sequence,
    commits,
    cyclic_soundness_step,
    make_behavior,
    simple_commit_step,
)
from .values import canonical, encode

RNG_NAME = "mt19937/genrand_res53"  # CPython random.Random seeded with the integer seed
PROTOCOLS = ("none", "simple-ack", "cyclic-ack")
DEFAULT_DATA_COUNT = 20


@dataclass
class Scenario:
    protocol: str
    nodes: list
    group: list
    steps: int
    seed: int = 0
    p: float = 0.5
    scripted: list | None = None
    faults: dict = field(default_factory=dict)
    data_plan: list = field(default_factory=list)  # (origin, id, earliest step)
    policy: str = "eager"

    @property
    def cfg(self) -> GroupConfig:
        return GroupConfig(tuple(self.group))

    def to_json(self) -> dict:
        delivery = (
            {"mode": "scripted", "entries": [e.to_json() for e in self.scripted]}
            if self.scripted is not None
            else {"mode": "random", "p": self.p}
        )
        return {
            "protocol": self.protocol,
            "nodes": list(self.nodes),
            "group": list(self.group),
            "steps": self.steps,
            "seed": self.seed,
            "delivery": delivery,
            "faults": [{"node": n, "kind": k} for n, k in self.faults.items()],
            "data_plan": [{"origin": o, "id": i, "step": s} for o, i, s in self.data_plan],
            "policy": self.policy,
        }


def _need(d: dict, key: str, kind, path=None):
    path = path or key
    if key not in d:
        raise ScenarioError("missing required field", field=path)
    value = d[key]
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ScenarioError(f"expected {getattr(kind, '__name__', kind)}, got {value!r}", field=path)
    return value


def parse_scenario(d: Any) -> Scenario:
    if not isinstance(d, dict):
        raise ScenarioError("scenario must be a JSON object")
    known = {"protocol", "nodes", "group", "steps", "seed", "delivery", "faults", "data_plan", "policy", "data_count"}
    for key in d:
        if key not in known:
            raise ScenarioError("unknown field", field=key)
    protocol = _need(d, "protocol", str)
    if protocol not in PROTOCOLS:
        raise ScenarioError(f"must be one of {list(PROTOCOLS)}", field="protocol")
    nodes = _need(d, "nodes", list)
    if not nodes or not all(isinstance(n, str) for n in nodes):
        raise ScenarioError("must be a nonempty list of node names", field="nodes")
    if len(set(nodes)) != len(nodes):
        raise ScenarioError("duplicate node names", field="nodes")

    group_raw = d.get("group", nodes)
    if isinstance(group_raw, dict):
        members = _need(group_raw, "members", list, "group.members")
        order = group_raw.get("order", members)
        if sorted(order) != sorted(members):
            raise ScenarioError("order must be a permutation of members", field="group.order")
        group = list(order)
    elif isinstance(group_raw, list):
        group = list(group_raw)
    else:
        raise ScenarioError("must be a list or {members, order}", field="group")
    if not group:
        raise ScenarioError("group must be nonempty", field="group")
    if len(set(group)) != len(group):
        raise ScenarioError("group repeats a node", field="group")
    for n in group:
        if n not in nodes:
            raise ScenarioError(f"{n!r} is not a declared node", field="group")

    seed = d.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ScenarioError("must be a 64-bit unsigned integer", field="seed")

    delivery = d.get("delivery", {"mode": "random", "p": 0.5})
    if not isinstance(delivery, dict):
        raise ScenarioError("must be an object", field="delivery")
    mode = delivery.get("mode")
    p = 0.5
    scripted = None
    if mode == "random":
        p = delivery.get("p", 0.5)
        if not isinstance(p, (int, float)) or isinstance(p, bool) or not 0 <= p <= 1:
            raise ScenarioError("must be a probability in [0, 1]", field="delivery.p")
        p = float(p)
    elif mode == "scripted":
        entries = _need(delivery, "entries", list, "delivery.entries")
        scripted = []
        for i, raw in enumerate(entries):
            where = f"delivery.entries[{i}]"
            if not isinstance(raw, dict):
                raise ScenarioError("must be an object", field=where)
            entry = ScheduleEntry.from_json(raw)
            for n in [entry.transmitter, *entry.receivers, *(entry.local or ())]:
                if n is not None and n not in nodes:
                    raise ScenarioError(f"{n!r} is not a declared node", field=where)
            scripted.append(entry)
    else:
        raise ScenarioError("mode must be 'random' or 'scripted'", field="delivery.mode")

    steps = d.get("steps", len(scripted) if scripted is not None else None)
    if not isinstance(steps, int) or isinstance(steps, bool) or steps < 0:
        raise ScenarioError("must be a non-negative integer", field="steps")

    faults = {}
    for i, f in enumerate(d.get("faults", [])):
        where = f"faults[{i}]"
        if not isinstance(f, dict):
            raise ScenarioError("must be an object", field=where)
        node = _need(f, "node", str, where + ".node")
        kind = _need(f, "kind", str, where + ".kind")
        if node not in nodes:
            raise ScenarioError(f"{node!r} is not a declared node", field=where + ".node")
        if kind not in FAULTS:
            raise ScenarioError(f"unknown fault; choose from {sorted(FAULTS)}", field=where + ".kind")
        if FAULTS[kind][0] != protocol:
            raise ScenarioError(f"fault applies to protocol {FAULTS[kind][0]!r}", field=where + ".kind")
        faults[node] = kind

    policy = d.get("policy", "eager")
    if policy not in POLICIES:
        raise ScenarioError(f"unknown policy; choose from {sorted(POLICIES)}", field="policy")

    plan = _parse_plan(d, protocol, nodes, steps)
    return Scenario(protocol, nodes, group, steps, seed, p, scripted, faults, plan, policy)


def _parse_plan(d, protocol, nodes, steps):
    alloc = SequenceAllocator()
    plan = []
    if "data_plan" in d:
        raw = d["data_plan"]
        if not isinstance(raw, list):
            raise ScenarioError("must be a list", field="data_plan")
        for i, item in enumerate(raw):
            where = f"data_plan[{i}]"
            if not isinstance(item, dict):
                raise ScenarioError("must be an object", field=where)
            origin = _need(item, "origin", str, where + ".origin")
            if origin not in nodes:
                raise ScenarioError(f"{origin!r} is not a declared node", field=where + ".origin")
            at = item.get("step", 0)
            if not isinstance(at, int) or at < 0:
                raise ScenarioError("must be a non-negative integer", field=where + ".step")
            ident = item.get("id")
            try:
                if protocol == "cyclic-ack":
                    ident = alloc.allocate(origin) if ident is None else alloc.claim(ident, origin)
                elif ident is None:
                    ident = alloc.allocate(origin)
                elif isinstance(ident, int):
                    alloc.claim(ident, origin)
                elif not isinstance(ident, str):
                    raise ScenarioError("must be a string or integer", field=where + ".id")
            except ScheduleError as exc:
                raise ScenarioError(str(exc), field=where + ".id") from None
            plan.append((origin, ident, at))
        ids = [p[1] for p in plan]
        if len(set(map(canonical, map(encode, ids)))) != len(ids):
            raise ScenarioError("data ids must be unique", field="data_plan")
        return plan
    count = d.get("data_count", DEFAULT_DATA_COUNT)
    if not isinstance(count, int) or count < 0:
        raise ScenarioError("must be a non-negative integer", field="data_count")
    spacing = max(1, steps // (2 * max(count, 1)))
    for i in range(count):
        origin = nodes[i % len(nodes)]
        plan.append((origin, alloc.allocate(origin), i * spacing))
    return plan


def shipped_scenarios() -> list[str]:
    """Names of the scenario files bundled with the package."""
    root = resources.files("statecalc") / "scenarios"
    return sorted(f.name[:-5] for f in root.iterdir() if f.name.endswith(".json"))


def read_scenario(path) -> dict:
    """Raw scenario JSON from a file; a bare name such as ``cyclic-5`` picks a bundled one."""
    path = str(path)
    if not Path(path).exists() and path in shipped_scenarios():
        text = (resources.files("statecalc") / "scenarios" / f"{path}.json").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario {path!r}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(exc.msg, line=exc.lineno) from None


def load_scenario(path) -> Scenario:
    return parse_scenario(read_scenario(path))


# -- building and monitoring -------------------------------------------------------


def build_network(scn: Scenario) -> NetworkState:
    cfg = scn.cfg
    plans = {n: [] for n in scn.nodes}
    for origin, ident, at in scn.data_plan:
        plans[origin].append((at, data(ident)))
    behaviors = {
        n: make_behavior(scn.protocol, n, cfg, plans[n], scn.policy, scn.faults.get(n))
        for n in scn.nodes
    }
    return init_network(scn.nodes, behaviors)


class MonitorSuite:
    """Every monitor applicable to the scenario's protocol, checked after each step."""

    def __init__(self, scn: Scenario):
        self.scn = scn
        self.cfg = scn.cfg
        self.exempt = frozenset(scn.faults)
        self.turns = TurnMonitor(self.cfg) if scn.protocol == "cyclic-ack" else None

    @property
    def names(self) -> list[str]:
        names = ["no_spurious", "monotone", "step_bound", "pairing"]
        if self.scn.protocol == "simple-ack":
            names += ["transmit_constraint", "ack_lemma", "simple_commit"]
        elif self.scn.protocol == "cyclic-ack":
            names += ["transmit_constraint", "unique_sequence", "cyclic_soundness", "turn_discipline"]
        return names

    def check(self, prev: NetworkState, st: NetworkState) -> dict[str, Violation | None]:
        out = {
            "no_spurious": check_no_spurious(st),
            "monotone": check_monotone(prev, st),
            "step_bound": check_step_bound(prev, st),
            "pairing": check_pairing(prev, st),
        }
        if self.scn.protocol == "simple-ack":
            out["transmit_constraint"] = check_transmit_constraint(st, self.cfg, self.exempt)
            out["ack_lemma"] = ack_lemma_step(st)
            out["simple_commit"] = simple_commit_step(st, self.cfg)
        elif self.scn.protocol == "cyclic-ack":
            out["transmit_constraint"] = check_transmit_constraint(st, self.cfg, self.exempt)
            out["unique_sequence"] = check_unique_sequence(st)
            out["cyclic_soundness"] = cyclic_soundness_step(st, self.cfg)
            out["turn_discipline"] = self.turns.check(st)
        return out


def _verdicts_json(verdicts: dict) -> dict:
    return {k: ("ok" if v is None else v.witness) for k, v in verdicts.items()}


def step_record(t: int, entry: ScheduleEntry, st: NetworkState, verdicts: dict) -> dict:
    return {
        "type": "step",
        "step": t,
        "schedule": entry.to_json(),
        "message": None if st.message is None else encode(st.message),
        "appended": {n: encode(ev) for n, ev in sorted(st.appended.items())},
        "verdicts": _verdicts_json(verdicts),
    }


@dataclass
class RunResult:
    lines: list  # canonical JSON text, one per log line
    final: NetworkState
    violation: Violation | None
    steps_run: int
    commit_count: int

    @property
    def ok(self) -> bool:
        return self.violation is None

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)


def header(scn: Scenario, seed: int) -> dict:
    return {"type": "header", "tool": "statecalc", "version": __version__, "rng": RNG_NAME, "seed": seed, "scenario": scn.to_json()}


def footer(st: NetworkState, scn: Scenario, violation: Violation | None, steps_run: int) -> dict:
    cm = commits(st, scn.protocol, scn.cfg)
    return {
        "type": "footer",
        "steps": steps_run,
        "violation": None if violation is None else violation.to_json(),
        "derived": {
            n: {
                "R": encode(st.views[n].R),
                "S": encode(st.views[n].S),
            }
            for n in st.names
        },
        "commits": {n: [encode(x) for x in v] for n, v in cm.items()},
        "commit_implications_hold": final_commit_check(st, scn) is None,
    }


def final_commit_check(st: NetworkState, scn: Scenario) -> Violation | None:
    """Whole-state commit implication check, independent of the per-step monitors."""
    if scn.protocol == "simple-ack":
        return check_ack_lemma(st) or check_simple_commit(st, scn.cfg)
    if scn.protocol == "cyclic-ack":
        return check_cyclic_soundness(st, scn.cfg)
    return None


def run_scenario(scn: Scenario, seed: int | None = None) -> RunResult:
    """Execute a scenario, checking every monitor after each step; stop at the first violation."""
    seed = scn.seed if seed is None else seed
    rng = random.Random(seed)
    st = build_network(scn)
    monitors = MonitorSuite(scn)
    lines = [canonical(header(scn, seed))]
    violation = None
    steps_run = 0
    for t in range(scn.steps):
        if scn.scripted is not None:
            entry = scn.scripted[t] if t < len(scn.scripted) else ScheduleEntry()
        else:
            entry = random_schedule(st, rng, scn.p)
        nxt = network_step(st, entry)
        verdicts = monitors.check(st, nxt)
        lines.append(canonical(step_record(t, entry, nxt, verdicts)))
        st = nxt
        steps_run += 1
        bad = [v for v in verdicts.values() if v is not None]
        if bad:
            violation = bad[0]
            break
    lines.append(canonical(footer(st, scn, violation, steps_run)))
    total = sum(len(v) for v in commits(st, scn.protocol, scn.cfg).values())
    return RunResult(lines, st, violation, steps_run, total)


@dataclass
class ReplayReport:
    ok: bool
    steps: int
    mismatches: list


def replay_log(lines: Iterable[str]) -> ReplayReport:
    """Re-execute the recorded schedule entries and compare every record byte for byte."""
    lines = [ln.rstrip("\n") for ln in lines if ln.strip()]
    if not lines:
        return ReplayReport(False, 0, ["empty log"])
    head = json.loads(lines[0])
    if head.get("type") != "header":
        return ReplayReport(False, 0, ["first line is not a header"])
    scn = parse_scenario(head["scenario"])
    st = build_network(scn)
    monitors = MonitorSuite(scn)
    mismatches = []
    steps = 0
    violation = None
    for raw in lines[1:]:
        rec = json.loads(raw)
        if rec["type"] != "step":
            expect = canonical(footer(st, scn, violation, steps))
            if expect != raw:
                mismatches.append("footer differs")
            break
        entry = ScheduleEntry.from_json(rec["schedule"])
        nxt = network_step(st, entry)
        verdicts = monitors.check(st, nxt)
        again = canonical(step_record(rec["step"], entry, nxt, verdicts))
        if again != raw:
            mismatches.append(f"step {rec['step']} differs")
        bad = [v for v in verdicts.values() if v is not None]
        if bad and violation is None:
            violation = bad[0]
        st = nxt
        steps += 1
    return ReplayReport(not mismatches, steps, mismatches)


def _fuzz_one(base: dict, seed: int) -> dict:
    res = run_scenario(parse_scenario(dict(base, seed=seed)))
    return {
        "seed": seed,
        "steps": res.steps_run,
        "violation": None if res.violation is None else res.violation.to_json(),
        "commits": res.commit_count,
    }


def fuzz(
    protocol: str,
    nodes: list,
    steps: int,
    seeds: Iterable[int],
    p: float = 0.5,
    policy="eager",
    faults=None,
    group=None,
    data_count=None,
    jobs: int = 1,
) -> dict:
    """One random-delivery run per seed; summary of violations and commits, in seed order."""
    base = {
        "protocol": protocol,
        "nodes": list(nodes),
        "group": list(group or nodes),
        "steps": steps,
        "delivery": {"mode": "random", "p": p},
        "faults": [{"node": n, "kind": k} for n, k in (faults or {}).items()],
        "policy": policy,
    }
    if data_count is not None:
        base["data_count"] = data_count
    parse_scenario(dict(base, seed=0))  # fail fast on a bad configuration
    seeds = list(seeds)
    if not seeds:
        raise ScenarioError("seed range is empty", field="seeds")
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(_fuzz_one, [base] * len(seeds), seeds))
    else:
        per_seed = [_fuzz_one(base, seed) for seed in seeds]
    by_monitor: dict[str, int] = {}
    for r in per_seed:
        if r["violation"]:
            name = r["violation"]["monitor"]
            by_monitor[name] = by_monitor.get(name, 0) + 1
    return {
        "protocol": protocol,
        "runs": per_seed,
        "violations": by_monitor,
        "total_violations": sum(by_monitor.values()),
        "total_commits": sum(r["commits"] for r in per_seed),
    }
