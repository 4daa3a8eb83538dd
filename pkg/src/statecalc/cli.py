"""``statecalc`` command line.

Exit codes are shared by every verb: 0 clean, 1 usage or parse error,
2 violation (or, for ``equivalent``, a distinguishing trace), 3 exploration
bound exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from typing import Callable

from . import __version__
from .catalog import (
    DEQ,
    TICK,
    bounded_queue,
    connected_counter_parts,
    enq,
    mod_counter,
    queue_variable,
    unbounded_counter,
)
from .errors import CalcError, IncompleteExploration, ScenarioError
from .machine import equivalent, machine_to_dict, minimize, partition_to_dict
from .product import bidirectional_register, shift, shift_in, shift_register
from .scenario import (
    fuzz,
    parse_scenario,
    read_scenario,
    replay_log,
    run_scenario,
    shipped_scenarios,
)
from .values import Event, canonical, encode
from .variables import StateVariable, constant, to_machine

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, EXIT_BOUND = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 means "violation" here
    def error(self, message):
        raise UsageError(message)


# -- example registry -----------------------------------------------------------------


@dataclass
class ExampleEntry:
    build: Callable[..., dict]  # params -> ordered {name: variable}; the first is the primary output
    params: dict = field(default_factory=dict)  # name -> default
    basis: Callable[..., list] = lambda **_: [TICK]
    help: str = ""


def _values(raw) -> list:
    return [v for v in str(raw).split(",") if v]


def _connected(c):
    parts = connected_counter_parts(c)
    return {"D": parts.value, "C": parts.counter, "sub_u_C": parts.inner}


def _bounded(c, values):
    bq = bounded_queue(c, _values(values))
    return {"cq": bq.cq, "high_water": bq.high_water, "defined": bq.defined, "Q": bq.queue}


EXAMPLES: dict[str, ExampleEntry] = {
    "mod-counter": ExampleEntry(lambda c: {"C": mod_counter(c)}, {"c": 3}, help="counter mod c"),
    "unbounded-counter": ExampleEntry(lambda: {"C": unbounded_counter()}, help="counts every event"),
    "connected-counters": ExampleEntry(_connected, {"c": 2}, help="two mod-c counters chained; counts mod c^2"),
    "queue": ExampleEntry(
        lambda values: {"Q": queue_variable(_values(values))},
        {"values": "a,b"},
        lambda values: [enq(v) for v in _values(values)] + [DEQ],
        "map-valued queue over the given values",
    ),
    "bounded-queue": ExampleEntry(
        _bounded,
        {"c": 2, "values": "a,b"},
        lambda c, values: [enq(v) for v in _values(values)] + [DEQ],
        "queue head, unspecified once the high-water mark reaches c",
    ),
    "shift-register": ExampleEntry(
        lambda n, values: {"cells": shift_register(n)},
        {"n": 3, "values": "a,b"},
        lambda n, values: [shift_in(v) for v in _values(values)],
        "n cells fed from the left",
    ),
    "bidir-register": ExampleEntry(
        lambda n, values: {"cells": bidirectional_register(n)},
        {"n": 3, "values": "a,b"},
        lambda n, values: [shift(r, v) for r in (1, -1) for v in _values(values)],
        "n cells shifting either way",
    ),
    "constant": ExampleEntry(
        lambda k: {"K": constant(k)}, {"k": 0}, help="ignores every event"
    ),
}


def _coerce(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def parse_target(target: str, extra: list[str] = ()) -> tuple[str, dict]:
    """``name[:key=value,...]`` plus any ``key=value`` strings from ``--param``."""
    name, _, inline = target.partition(":")
    if name not in EXAMPLES:
        raise UsageError(f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}")
    params = dict(EXAMPLES[name].params)
    pairs = [p for p in inline.split(",") if p] if inline else []
    # a comma inside a value list would split it; "values=a,b" is handled below
    merged: list[str] = []
    for p in pairs:
        if "=" in p or not merged:
            merged.append(p)
        else:
            merged[-1] += "," + p
    for p in [*merged, *extra]:
        key, eq, value = p.partition("=")
        if not eq:
            raise UsageError(f"parameter {p!r} must look like key=value")
        if key not in params:
            raise UsageError(f"example {name!r} has no parameter {key!r}; known: {sorted(params) or 'none'}")
        params[key] = value if key == "values" else _coerce(value)
    return name, params


def build_example(name: str, params: dict) -> dict[str, StateVariable]:
    try:
        return EXAMPLES[name].build(**params)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad parameters for {name!r}: {exc}") from None


def parse_event(text: str) -> Event:
    """``tick``, ``enq:a``, ``deq``, ``shift:a`` or ``shift:+1:x``."""
    parts = text.split(":")
    name = parts[0]
    if not name:
        raise UsageError(f"empty event name in {text!r}")
    if len(parts) == 1:
        return Event(name)
    if len(parts) == 2:
        return Event(name, _coerce(parts[1]))
    if len(parts) == 3:
        return Event(name, (_coerce(parts[1]), _coerce(parts[2])))
    raise UsageError(f"cannot parse event {text!r}")


def parse_events(tokens: list[str]) -> list[Event]:
    """Events separated by spaces or commas; ``tick*5`` repeats."""
    out = []
    for tok in tokens:
        for item in tok.split(","):
            if not item:
                continue
            base, star, count = item.partition("*")
            n = 1
            if star:
                if not count.isdigit():
                    raise UsageError(f"bad repeat count in {item!r}")
                n = int(count)
            out.extend([parse_event(base)] * n)
    return out


def parse_seeds(text: str) -> list[int]:
    """``0..99`` (inclusive), ``7``, or ``1,5,9``."""
    seeds = []
    for part in text.split(","):
        lo, dots, hi = part.partition("..")
        try:
            if dots:
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise UsageError(f"bad seed range {text!r}") from None
    if not seeds:
        raise UsageError(f"seed range {text!r} is empty")
    return seeds


def parse_nodes(text: str) -> list[str]:
    """A count (``4`` gives n0..n3) or a comma-separated name list."""
    if text.isdigit():
        k = int(text)
        if k < 1:
            raise UsageError("need at least one node")
        return [f"n{i}" for i in range(k)]
    names = [n for n in text.split(",") if n]
    if not names:
        raise UsageError("need at least one node")
    return names


def parse_faults(items: list[str]) -> dict:
    faults = {}
    for item in items or ():
        node, colon, kind = item.partition(":")
        if not colon:
            raise UsageError(f"fault {item!r} must look like node:kind")
        faults[node] = kind
    return faults


# -- verbs ----------------------------------------------------------------------------------


def _emit(obj, out) -> None:
    out.write(canonical(obj) + "\n")


def cmd_example(args, out) -> int:
    name, params = parse_target(args.name, args.param)
    variables = build_example(name, params)
    events = parse_events(args.events)
    for y in variables.values():
        y.check_trace(events)
    series = {k: y.prefix_values(events) for k, y in variables.items()}
    for i in range(len(events) + 1):
        _emit(
            {
                "step": i,
                "event": None if i == 0 else encode(events[i - 1]),
                "values": {k: encode(v[i]) for k, v in series.items()},
            },
            out,
        )
    return EXIT_OK


def _basis_for(name, params, raw) -> list[Event]:
    if raw:
        return parse_events(raw)
    return EXAMPLES[name].basis(**params)


def cmd_minimize(args, out) -> int:
    name, params = parse_target(args.name, args.param)
    y = next(iter(build_example(name, params).values()))
    basis = _basis_for(name, params, args.basis)
    try:
        table, part = minimize(to_machine(y), basis, args.bound)
    except IncompleteExploration as exc:
        _emit({"example": name, "params": params, "complete": False, "explored": len(exc.explored), "bound": args.bound}, out)
        return EXIT_BOUND
    report = {
        "example": name,
        "params": params,
        "complete": True,
        "state_count": len(part.classes),
        "machine": machine_to_dict(table, basis, args.bound),
    }
    if args.classes:
        report["classes"] = partition_to_dict(part)
    _emit(report, out)
    return EXIT_OK


def cmd_equivalent(args, out) -> int:
    left_name, left_params = parse_target(args.left)
    right_name, right_params = parse_target(args.right)
    left = next(iter(build_example(left_name, left_params).values()))
    right = next(iter(build_example(right_name, right_params).values()))
    basis = parse_events(args.basis) if args.basis else EXAMPLES[left_name].basis(**left_params)
    try:
        res = equivalent(to_machine(left), to_machine(right), basis, args.bound)
    except IncompleteExploration as exc:
        _emit({"complete": False, "explored": len(exc.explored), "bound": args.bound}, out)
        return EXIT_BOUND
    report = {"equivalent": res.equivalent, "complete": True}
    if not res.equivalent:
        w = res.counterexample
        report["counterexample"] = [encode(e) for e in w]
        report["length"] = len(w)
        report["outputs"] = [encode(left.eval(w)), encode(right.eval(w))]
    _emit(report, out)
    return EXIT_OK if res.equivalent else EXIT_VIOLATION


def _load(args) -> dict:
    raw = read_scenario(args.scenario)
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a JSON object")
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.steps is not None:
        raw["steps"] = args.steps
    if args.p is not None:
        raw["delivery"] = {"mode": "random", "p": args.p}
    if args.policy is not None:
        raw["policy"] = args.policy
    return raw


def cmd_run(args, out) -> int:
    scn = parse_scenario(_load(args))
    res = run_scenario(scn)
    text = res.text()
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        out.write(text)
    summary = {"steps": res.steps_run, "commits": res.commit_count, "violation": None if res.ok else res.violation.to_json()}
    print(canonical(summary), file=sys.stderr)
    return EXIT_OK if res.ok else EXIT_VIOLATION


def cmd_fuzz(args, out) -> int:
    nodes = parse_nodes(args.nodes)
    group = parse_nodes(args.group) if args.group else None
    summary = fuzz(
        args.protocol,
        nodes,
        args.steps,
        parse_seeds(args.seeds),
        p=args.p if args.p is not None else 0.5,
        policy=args.policy or "eager",
        faults=parse_faults(args.fault),
        group=group,
        data_count=args.data_count,
        jobs=args.jobs,
    )
    if args.out:
        with open(args.out, "w") as f:
            f.write(canonical(summary) + "\n")
    brief = {k: v for k, v in summary.items() if k != "runs"}
    brief["seeds"] = len(summary["runs"])
    _emit(brief, out)
    return EXIT_OK if summary["total_violations"] == 0 else EXIT_VIOLATION


def cmd_replay(args, out) -> int:
    try:
        with open(args.log) as f:
            lines = f.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read log {args.log!r}: {exc.strerror}") from None
    try:
        report = replay_log(lines)
    except (json.JSONDecodeError, KeyError) as exc:
        raise ScenarioError(f"malformed log: {exc}") from None
    _emit({"ok": report.ok, "steps": report.steps, "mismatches": report.mismatches}, out)
    return EXIT_OK if report.ok else EXIT_VIOLATION


def cmd_scenarios(args, out) -> int:
    for name in shipped_scenarios():
        out.write(name + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="statecalc", description="State-variable examples, machine tools, and protocol simulation.")
    parser.add_argument("--version", action="version", version=f"statecalc {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    ex = sub.add_parser("example", help="evaluate a catalog example on an event trace")
    ex.add_argument("name", help=f"one of: {', '.join(EXAMPLES)} (optionally name:key=value,...)")
    ex.add_argument("events", nargs="*", help="events such as tick, enq:a, deq, shift:a, shift:+1:x; tick*5 repeats")
    ex.add_argument("--param", action="append", default=[], help="key=value")

    mn = sub.add_parser("minimize", help="minimize an example's machine over an event basis")
    mn.add_argument("name")
    mn.add_argument("--param", action="append", default=[])
    mn.add_argument("--basis", nargs="+", help="events to explore (defaults per example)")
    mn.add_argument("--bound", type=int, default=10_000, help="maximum reachable states")
    mn.add_argument("--classes", action="store_true", help="also print the state classes")

    eq = sub.add_parser("equivalent", help="compare two examples; exit 2 with a shortest distinguishing trace")
    eq.add_argument("left", help="e.g. mod-counter:c=3")
    eq.add_argument("right", help="e.g. mod-counter:c=4")
    eq.add_argument("--basis", nargs="+")
    eq.add_argument("--bound", type=int, default=10_000)

    rn = sub.add_parser("run", help="run one scenario and write its trace log")
    rn.add_argument("--scenario", required=True, help="scenario JSON file, or a bundled name")
    rn.add_argument("--out", help="trace log path (default: stdout)")
    rn.add_argument("--seed", type=int)
    rn.add_argument("--steps", type=int)
    rn.add_argument("--p", type=float, help="switch to random delivery with this probability")
    rn.add_argument("--policy")

    fz = sub.add_parser("fuzz", help="one random run per seed; summary of violations and commits")
    fz.add_argument("--protocol", required=True, choices=["none", "simple-ack", "cyclic-ack"])
    fz.add_argument("--nodes", required=True, help="count or comma-separated names")
    fz.add_argument("--group", help="group in turn order (default: all nodes)")
    fz.add_argument("--steps", type=int, required=True)
    fz.add_argument("--seeds", required=True, help="e.g. 0..99")
    fz.add_argument("--p", type=float)
    fz.add_argument("--policy")
    fz.add_argument("--fault", action="append", help="node:kind, repeatable")
    fz.add_argument("--data-count", type=int)
    fz.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    fz.add_argument("--out", help="write the full per-seed report here")

    rp = sub.add_parser("replay", help="re-execute a trace log and compare it byte for byte")
    rp.add_argument("log")

    sub.add_parser("scenarios", help="list bundled scenarios")
    return parser


VERBS = {
    "example": cmd_example,
    "minimize": cmd_minimize,
    "equivalent": cmd_equivalent,
    "run": cmd_run,
    "fuzz": cmd_fuzz,
    "replay": cmd_replay,
    "scenarios": cmd_scenarios,
}


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        return VERBS[args.verb](args, out)
    except (UsageError, ScenarioError, CalcError, ValueError) as exc:
        print(f"statecalc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
