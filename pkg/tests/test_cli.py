import subprocess
import sys
from pathlib import Path

import pytest

import timeline
import traceutil
from rtmanage import cli
from rtmanage.simulator import parse_trace_line

ROOT = Path(__file__).resolve().parent.parent
SC = ROOT / "scenarios"
GOLDEN = Path(__file__).resolve().parent / "golden"


def run(*argv):
    return cli.run([str(a) for a in argv])


def test_analyze_basic():
    text, status = run("analyze", "--scenario", SC / "basic.json")
    assert status == 0 and "verdict: SCHEDULABLE" in text
    assert "C^manag=1 T^manag=8 D^manag=1" in text
    rows = {line.split()[0]: line.split() for line in text.splitlines()[3:6]}
    assert [rows[c][5] for c in "ABC"] == ["2", "4", "11"]


def test_analyze_unschedulable():
    text, status = run("analyze", "--scenario", SC / "tight.json")
    assert status == 1 and "UNSCHEDULABLE" in text and "diverged" in text


def test_analyze_inert_management():
    text, status = run("analyze", "--scenario", SC / "no_ops.json")
    assert status == 0 and "C^manag=0" in text and "inert" in text


def test_admit_rejected():
    text, status = run("admit", "--scenario", SC / "basic.json", "--op-kind", "big", "--op-cost", 3)
    assert status == 1 and "REJECTED (rta_fail)" in text
    assert "C^manag: 1 -> 1" in text


def test_admit_fast_path():
    text, status = run("admit", "--scenario", SC / "basic.json", "--op-kind", "unbind", "--op-cost", 1)
    assert status == 0 and "ACCEPTED (fast_path)" in text


def test_admit_duplicate_kind():
    text, status = run("admit", "--scenario", SC / "basic.json", "--op-kind", "replace", "--op-cost", 1)
    assert status == 2 and text.startswith("error:")


@pytest.mark.parametrize("argv, expected", [
    (("--cost", 2, "--util", 10), "T^manag: 20"),
    (("--window", 120000, "--count", 60), "T^manag: 2000"),
    (("--cost", 2, "--util", 10, "--snap", 20, "--scenario", SC / "sized_by_util.json"), "T^manag: 18"),
])
def test_mgmt_period(argv, expected):
    text, status = run("mgmt-period", *argv)
    assert status == 0 and expected in text.splitlines()


@pytest.mark.parametrize("argv", [
    ("--cost", 2),
    ("--cost", 2, "--util", 10, "--window", 100, "--count", 5),
    ("--window", 100),
    ("--cost", 2, "--util", 10, "--snap", 20),
])
def test_mgmt_period_usage_errors(argv):
    _, status = run("mgmt-period", *argv)
    assert status == 2


def test_invalid_scenario_reports_diagnostics(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"metadata": {"name": "x", "tick_unit": "ms"},\n "components": [], "bogus": 1}\n')
    text, status = run("analyze", "--scenario", bad)
    assert status == 2 and "bogus" in text and "line" in text


def test_missing_file():
    _, status = run("analyze", "--scenario", SC / "nope.json")
    assert status == 2


def test_unknown_command():
    _, status = run("frobnicate")
    assert status == 2


def test_simulate_golden_trace(tmp_path):
    out = tmp_path / "basic.trace"
    text, status = run("simulate", "--scenario", SC / "basic.json", "--trace", out)
    assert status == 0 and "deadline misses: 0" in text
    golden = (GOLDEN / "basic.trace").read_text(encoding="utf-8")
    assert out.read_text(encoding="utf-8") == golden


def test_golden_trace_matches_oracle():
    events = [parse_trace_line(line) for line in (GOLDEN / "basic.trace").read_text().splitlines()]
    tasks = [("mgmt", 1, 8, 8), ("A", 1, 4, 4), ("B", 2, 6, 6), ("C", 2, 12, 12)]
    horizon = timeline.hyperperiod(tasks)
    # no requests: the management task activates but never runs
    expected, _, misses = timeline.run(tasks[1:], horizon)
    assert traceutil.schedule(events, horizon) == expected and not misses


def test_simulate_until_beyond_horizon():
    _, status = run("simulate", "--scenario", SC / "basic.json", "--until", 25)
    assert status == 2


def test_simulate_needs_simulation_block():
    _, status = run("simulate", "--scenario", SC / "tight.json")
    assert status == 2


def test_simulate_interference_reported():
    text, status = run("simulate", "--scenario", SC / "interference_lowest.json")
    assert "interference_detected: 1" in text and status == 0
    assert "request latency:" in text


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rtmanage", "analyze", "--scenario", str(SC / "basic.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "SCHEDULABLE" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "rtmanage", "simulate", "--scenario", str(SC / "basic.json"),
                           "--until", "99"], capture_output=True, text=True)
    assert proc.returncode == 2 and "beyond the horizon" in proc.stderr
