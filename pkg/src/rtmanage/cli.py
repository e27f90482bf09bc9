"""Command-line front end.

    rtmanage analyze     --scenario FILE
    rtmanage admit       --scenario FILE --op-kind KIND --op-cost TICKS
    rtmanage simulate    --scenario FILE [--until T] [--trace FILE] [--seed N]
    rtmanage mgmt-period [--cost C] (--util U | --window T --count N) [--snap TOL --scenario FILE]

Exit status: 0 success / schedulable / accepted, 1 analytic negative,
2 usage or validation error.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction

from . import analysis
from .admission import DuplicateKindError, register_operation
from .model import ManagementOpSpec
from .scenario import ScenarioError, load_scenario
from .simulator import Simulation, SimulationError, format_trace

OK, NEGATIVE, USAGE = 0, 1, 2


class CommandError(Exception):
    """Usage or validation problem; reported with exit status 2."""


def _mgmt_line(mgmt) -> str:
    if mgmt.cost == 0:
        return "management task: C^manag=0 (inert: no operations registered)"
    return (f"management task: C^manag={mgmt.cost} T^manag={mgmt.period} D^manag={mgmt.deadline}"
            f" U={100 * mgmt.cost / mgmt.period:.2f}%")


def _table(headers, rows) -> list:
    widths = [max(len(str(x)) for x in col) for col in zip(headers, *rows)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    return [fmt.format(*headers).rstrip()] + [fmt.format(*map(str, r)).rstrip() for r in rows]


def cmd_analyze(scenario):
    state = scenario.to_state()
    report = analysis.response_time_with_mgmt(state.task_set, state.mgmt)
    lines = [f"scenario: {scenario.name} (tick unit: {scenario.tick_unit})", _mgmt_line(state.mgmt)]
    rows = []
    for comp in state.task_set.components:
        e = report[comp.id]
        r = "diverged" if e.diverged else e.response_time
        rows.append((comp.id, comp.wcet, comp.period, comp.deadline, comp.priority, r,
                     "yes" if e.schedulable else "NO"))
    lines += _table(("component", "C", "T", "D", "rank", "R", "ok"), rows)
    verdict = report.schedulable
    lines.append(f"verdict: {'SCHEDULABLE' if verdict else 'UNSCHEDULABLE'}")
    return "\n".join(lines) + "\n", OK if verdict else NEGATIVE


def cmd_admit(scenario, kind: str, cost: int):
    state = scenario.to_state()
    try:
        _, decision = register_operation(state, ManagementOpSpec(kind, cost))
    except DuplicateKindError as exc:
        raise CommandError(str(exc))
    lines = [
        f"operation: {kind} (cost {cost})",
        f"decision: {'ACCEPTED' if decision.accepted else 'REJECTED'} ({decision.reason.value})",
        f"C^manag: {decision.before.cost} -> {decision.after.cost}  T^manag: {decision.after.period}",
    ]
    if decision.report is not None:
        rts = ", ".join(f"{e.id}={'diverged' if e.diverged else e.response_time}"
                        for e in decision.report.entries)
        lines.append(f"response times: {rts}")
    if decision.message:
        lines.append(f"note: {decision.message}")
    return "\n".join(lines) + "\n", OK if decision.accepted else NEGATIVE


def cmd_simulate(scenario, until=None, trace_path=None, seed=None):
    if scenario.simulation is None:
        raise CommandError(f"scenario {scenario.name!r} has no simulation block")
    horizon = scenario.simulation.horizon
    until = horizon if until is None else until
    if until > horizon:
        raise CommandError(f"--until {until} is beyond the horizon {horizon}")
    try:
        sim = Simulation(scenario.sim_config(record_trace=trace_path is not None, seed=seed))
    except SimulationError as exc:
        raise CommandError(str(exc))
    _, summary = sim.run_until(until)
    if trace_path is not None:
        with open(trace_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(format_trace(sim.trace))

    lines = [f"scenario: {scenario.name} (tick unit: {scenario.tick_unit})",
             _mgmt_line(sim.state.mgmt),
             f"simulated: 0..{until} ({sim.mode}-priority management)"]
    lines += [f"warning: {w}" for w in sim.warnings]
    rows = [(cid, s.released, s.completed, s.missed, s.worst_response)
            for cid, s in summary.components.items()]
    lines += _table(("component", "released", "completed", "missed", "worst_R"), rows)
    committed = [r for r in summary.requests if r.commit is not None]
    lines.append(f"activations: {summary.activations}  operations executed: {summary.ops_executed}"
                 f"  committed: {len(committed)}")
    stats = summary.latency_stats()
    if stats is not None:
        lo, avg, hi = stats
        lines.append(f"request latency: min={lo} avg={avg:.3f} max={hi}")
    lines.append(f"deadline misses: {summary.misses}")
    lines.append(f"rejections: {summary.rejections}  overflows: {summary.overflows}"
                 f"  interference_detected: {summary.interferences}")
    if trace_path is not None:
        lines.append(f"trace: {trace_path} ({len(sim.trace)} events)")
    return "\n".join(lines) + "\n", OK if summary.misses == 0 else NEGATIVE


def cmd_mgmt_period(cost=None, util=None, window=None, count=None, snap=None, scenario=None):
    if (util is None) == (window is None and count is None):
        raise CommandError("give exactly one sizing mode: --util, or --window with --count")
    if util is not None:
        if cost is None:
            raise CommandError("--util needs --cost")
        try:
            period = analysis.period_from_utilization(cost, util)
        except ValueError as exc:
            raise CommandError(str(exc))
        how = f"utilization {util}% of cost {cost}"
    else:
        if window is None or count is None:
            raise CommandError("--window and --count go together")
        try:
            period = analysis.period_from_window(window, count)
        except ValueError as exc:
            raise CommandError(str(exc))
        how = f"{count} activations per {window} ticks"
    lines = [f"computed period: {period} ({how})"]
    if snap is not None:
        if scenario is None:
            raise CommandError("--snap needs --scenario for the existing periods")
        snapped = analysis.snap_period_to_existing(period, scenario.task_set(), snap)
        lines.append(f"snapped period: {snapped} (tolerance {snap}%)")
        period = snapped
    lines.append(f"T^manag: {period}")
    if cost is not None:
        lines.append(f"utilization: {float(Fraction(100 * cost, period)):.4f}%")
    return "\n".join(lines) + "\n", OK


def _number(text):
    try:
        return int(text)
    except ValueError:
        return float(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtmanage", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="response times with management interference")
    p.add_argument("--scenario", required=True)

    p = sub.add_parser("admit", help="acceptance test for a new management operation")
    p.add_argument("--scenario", required=True)
    p.add_argument("--op-kind", required=True)
    p.add_argument("--op-cost", required=True, type=int)

    p = sub.add_parser("simulate", help="run the discrete-event simulation")
    p.add_argument("--scenario", required=True)
    p.add_argument("--until", type=int)
    p.add_argument("--trace")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("mgmt-period", help="size the management period")
    p.add_argument("--cost", type=int)
    p.add_argument("--util", type=_number)
    p.add_argument("--window", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--snap", type=_number)
    p.add_argument("--scenario")
    return parser


def run(argv=None):
    """Run one command; returns ``(output_text, exit_status)``."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return "", USAGE if exc.code else OK
    try:
        scenario = load_scenario(args.scenario) if getattr(args, "scenario", None) else None
        if args.command == "analyze":
            return cmd_analyze(scenario)
        if args.command == "admit":
            return cmd_admit(scenario, args.op_kind, args.op_cost)
        if args.command == "simulate":
            return cmd_simulate(scenario, args.until, args.trace, args.seed)
        return cmd_mgmt_period(args.cost, args.util, args.window, args.count, args.snap, scenario)
    except ScenarioError as exc:
        return "".join(f"error: {d}\n" for d in exc.diagnostics), USAGE
    except (CommandError, OSError) as exc:
        return f"error: {exc}\n", USAGE


def main(argv=None):
    text, status = run(argv)
    out = sys.stdout if status != USAGE else sys.stderr
    out.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
