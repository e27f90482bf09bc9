"""Exact fixed-priority schedulability analysis.

Response times are the least fixed point of

    R = C_i + sum_{j in hp(i)} ceil(R / T_j) * C_j  [+ ceil(R / T_m) * C_m]

iterated from R = C_i and abandoned as soon as the iterate passes D_i.  The
optional bracketed term is the interference of the management task, which
always runs above every component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .model import Component, ManagementTaskConfig, OpRegistry, TaskSet, rank_by_rms


@dataclass(frozen=True)
class ComponentResponse:
    id: str
    deadline: int
    response_time: Optional[int]   # None: iteration passed the deadline
    iterations: int
    last_iterate: int

    @property
    def diverged(self) -> bool:
        return self.response_time is None

    @property
    def schedulable(self) -> bool:
        return self.response_time is not None and self.response_time <= self.deadline


@dataclass(frozen=True)
class ResponseTimeReport:
    entries: tuple
    mgmt: Optional[ManagementTaskConfig] = None

    @property
    def mgmt_response_time(self) -> Optional[int]:
        # highest priority and non-preemptible: it finishes in exactly its cost
        return None if self.mgmt is None else self.mgmt.cost

    @property
    def schedulable(self) -> bool:
        if self.mgmt is not None and self.mgmt.cost > self.mgmt.period:
            return False
        return all(e.schedulable for e in self.entries)

    def __getitem__(self, cid: str) -> ComponentResponse:
        for e in self.entries:
            if e.id == cid:
                return e
        raise KeyError(cid)

    def response_times(self) -> dict:
        return {e.id: e.response_time for e in self.entries}


def assign_rms_priorities(ts: TaskSet) -> TaskSet:
    return rank_by_rms(ts)


def fixed_point(wcet: int, deadline: int, interferers: Sequence[tuple]) -> tuple:
    """Iterate the response-time recurrence for one task.

    ``interferers`` holds ``(cost, period)`` pairs of every higher-priority
    demand.  Returns ``(response_or_None, iterations, last_iterate)``.
    """
    r = wcet
    iterations = 0
    while True:
        iterations += 1
        nxt = wcet
        for c, t in interferers:
            nxt += -(-r // t) * c
        if nxt == r:
            return r, iterations, r
        if nxt > deadline:
            return None, iterations, nxt
        r = nxt


def _report(ts: TaskSet, extra: Sequence[tuple], mgmt) -> ResponseTimeReport:
    entries = []
    for comp in ts.components:
        hp = [(o.wcet, o.period) for o in ts.components if o.priority < comp.priority]
        rt, its, last = fixed_point(comp.wcet, comp.deadline, list(extra) + hp)
        entries.append(ComponentResponse(comp.id, comp.deadline, rt, its, last))
    return ResponseTimeReport(tuple(entries), mgmt)


def response_time(ts: TaskSet) -> ResponseTimeReport:
    """Plain RTA; components must already carry RMS ranks."""
    return _report(ts, (), None)


def response_time_with_mgmt(ts: TaskSet, mgmt: ManagementTaskConfig) -> ResponseTimeReport:
    extra = [(mgmt.cost, mgmt.period)] if mgmt.cost > 0 else []
    return _report(ts, extra, mgmt)


def with_mgmt_task(ts: TaskSet, mgmt: ManagementTaskConfig, id: str = "__mgmt__") -> TaskSet:
    """The task set plus a synthetic rank -1 task standing in for the management task."""
    synthetic = Component(id, mgmt.cost, mgmt.period, max(mgmt.deadline, mgmt.cost), priority=-1)
    return TaskSet((synthetic,) + ts.components, ts.bindings)


def compute_cmanag(registry: OpRegistry) -> int:
    return registry.cmanag


def period_from_utilization(cost: int, util_percent) -> int:
    """Smallest period whose utilization ``cost/period`` stays within ``util_percent``."""
    util = Fraction(str(util_percent)) if isinstance(util_percent, float) else Fraction(util_percent)
    if util <= 0 or util > 100:
        raise ValueError(f"utilization percent must be in (0, 100], got {util_percent}")
    if cost < 1:
        raise ValueError(f"cost must be >= 1, got {cost}")
    return math.ceil(100 * cost / util)


def period_from_window(window: int, count: int) -> int:
    """Period that fits at least ``count`` activations into every ``window``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if window < count:
        raise ValueError(f"window {window} shorter than count {count}")
    return window // count


def snap_period_to_existing(candidate: int, ts, tolerance_percent) -> int:
    """Snap down to the largest existing period within ``tolerance_percent`` of ``candidate``.

    ``ts`` may be a TaskSet or a plain collection of periods.  Only downward
    snaps are made so the reserved activation rate is never reduced.
    """
    if candidate < 1:
        raise ValueError("candidate must be >= 1")
    periods = ts.periods if isinstance(ts, TaskSet) else list(ts)
    tol = Fraction(str(tolerance_percent)) if isinstance(tolerance_percent, float) else Fraction(tolerance_percent)
    fits = [p for p in periods if p <= candidate and Fraction(candidate - p, candidate) * 100 <= tol]
    return max(fits, default=candidate)


def hyperperiod(ts, mgmt: Optional[ManagementTaskConfig] = None) -> int:
    periods = ts.periods if isinstance(ts, TaskSet) else list(ts)
    if mgmt is not None:
        periods = periods + [mgmt.period]
    if not periods:
        raise ValueError("hyperperiod of an empty period collection")
    return math.lcm(*periods)


def is_schedulable(ts: TaskSet, mgmt: Optional[ManagementTaskConfig] = None) -> bool:
    ts = rank_by_rms(ts)
    if mgmt is None:
        return response_time(ts).schedulable
    return response_time_with_mgmt(ts, mgmt).schedulable

