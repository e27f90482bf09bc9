"""Reference scenarios and random task-set generators."""

from __future__ import annotations

import random

from . import analysis
from .model import (Component, ManagementOpSpec, ManagementTaskConfig, OpRegistry, ReplacePayload,
                    TaskSet, rank_by_rms)
from .scenario import MgmtSizing, Scenario, ScenarioRequest, SimulationBlock, SporadicBlock

# 1 tick = 100 us
STRESS_PERIODS = (100, 200, 250, 400, 500, 1000, 2000, 2500, 5000, 10000)
STRESS_SECONDS = 120
TICKS_PER_SECOND = 10_000


def uunifast(rng: random.Random, n: int, total: float) -> list:
    out = []
    rest = total
    for i in range(1, n):
        nxt = rest * rng.random() ** (1.0 / (n - i))
        out.append(rest - nxt)
        rest = nxt
    out.append(rest)
    return out


def random_taskset(rng: random.Random, n_min=2, n_max=5, p_min=2, p_max=30,
                   u_min=0.3, u_max=1.0) -> TaskSet:
    """Implicit-deadline set with integer parameters and utilization at most ``u_max``."""
    while True:
        n = rng.randint(n_min, n_max)
        periods = [rng.randint(p_min, p_max) for _ in range(n)]
        utils = uunifast(rng, n, rng.uniform(u_min, u_max))
        comps = [Component(f"t{i}", max(1, min(p, int(u * p))), p, p)
                 for i, (p, u) in enumerate(zip(periods, utils))]
        if sum(c.wcet * 1.0 / c.period for c in comps) <= 1.0:
            return rank_by_rms(TaskSet(tuple(comps)))


def stress_scenario(seed: int = 7, n: int = 100, utilization: float = 0.5,
                    replace_cost: int = 16, mit: int = 1000) -> Scenario:
    """100 components under continuous replacement for 120 simulated seconds.

    The single registered operation replaces a component by a fresh instance
    with the same parameters.  The management period is sized from the
    window/count form: one activation per ``mit`` ticks.
    """
    rng = random.Random(seed)
    horizon = STRESS_SECONDS * TICKS_PER_SECOND
    count = horizon // mit
    while True:
        utils = uunifast(rng, n, utilization)
        comps = []
        for i, u in enumerate(utils):
            p = rng.choice(STRESS_PERIODS)
            comps.append(Component(f"c{i:03d}", max(1, min(p, round(u * p))), p, p))
        ts = rank_by_rms(TaskSet(tuple(comps)))
        mgmt = ManagementTaskConfig.sized(replace_cost, analysis.period_from_window(horizon, count))
        if analysis.response_time_with_mgmt(ts, mgmt).schedulable:
            break
    return Scenario(
        name="stress-100",
        tick_unit="100us",
        components=tuple(comps),
        operations=(ManagementOpSpec("replace", replace_cost),),
        mgmt=MgmtSizing(window=horizon, count=count),
        simulation=SimulationBlock(horizon=horizon, seed=seed, queue_capacity=8,
                                   sporadic=SporadicBlock(mit, (("replace", 1),))),
    )


def interference_scenario(mode: str = "lowest") -> Scenario:
    """Two components and a replacement that a low-priority management task stretches.

    The replacement of ``co2`` is dequeued at t=12; with the management task
    at the bottom, ``co2`` releases at t=16 while the operation is still
    half done.
    """
    co1 = Component("co1", 2, 6, 6)
    co2 = Component("co2", 1, 8, 8)
    req = ScenarioRequest(1, "r1", "replace", ReplacePayload(co2))
    return Scenario(
        name=f"interference-{mode}",
        tick_unit="ms",
        components=(co1, co2),
        operations=(ManagementOpSpec("replace", 3),),
        mgmt=MgmtSizing(period=12),
        simulation=SimulationBlock(horizon=48, priority_mode=mode, requests=(req,)),
    )


def registry_of(*pairs) -> OpRegistry:
    return OpRegistry(tuple(ManagementOpSpec(k, w) for k, w in pairs))
