"""Deterministic discrete-event simulation of a component system.

Components are periodic jobs scheduled preemptively by RMS rank.  The
management task activates every ``mgmt.period`` ticks and, when the request
queue is not empty, executes exactly one queued operation for that
operation's registered cost.  In ``highest`` mode it runs above every
component without preemption; in ``lowest`` mode it only gets idle time and
can be preempted, which is what exposes targeted components to a half-done
operation.

The structural change itself is committed at a safe point: at the later of
the operation's end and the moment every targeted component is between jobs.
Targets that are between jobs when the operation ends are held (they start
no job and release no job) until the commit.

Within one tick, work is processed in a fixed order: completions, deadline
checks, commits, releases, request arrivals, management activation, and
finally dispatch.
"""

from __future__ import annotations

import enum
import heapq
import logging
import random
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence

from . import analysis
from .admission import UnknownKindError, admit_request
from .model import (
    AddPayload,
    ReplacePayload,
    Request,
    SystemState,
    apply_payload,
    request_targets,
    validate_taskset,
)

log = logging.getLogger(__name__)

HIGHEST = "highest"
LOWEST = "lowest"
MGMT = "mgmt"


class EventKind(str, enum.Enum):
    JOB_RELEASE = "job_release"
    JOB_START = "job_start"
    JOB_PREEMPT = "job_preempt"
    JOB_RESUME = "job_resume"
    JOB_COMPLETE = "job_complete"
    DEADLINE_MISS = "deadline_miss"
    MGMT_ACTIVATE = "mgmt_activate"
    MGMT_IDLE = "mgmt_idle"
    OP_EXEC_START = "op_exec_start"
    OP_EXEC_END = "op_exec_end"
    OP_COMMIT = "op_commit"
    REQUEST_ENQUEUED = "request_enqueued"
    REQUEST_REJECTED = "request_rejected"
    QUEUE_OVERFLOW = "queue_overflow"
    INTERFERENCE_DETECTED = "interference_detected"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class TraceEvent:
    time: int
    kind: EventKind
    subject: str
    detail: tuple = ()

    def format(self) -> str:
        detail = " ".join(f"{k}={v}" for k, v in self.detail)
        return f"{self.time}\t{self.kind.value}\t{self.subject}\t{detail}"

    def get(self, key, default=None):
        for k, v in self.detail:
            if k == key:
                return v
        return default


def format_trace(events: Iterable[TraceEvent]) -> str:
    return "".join(e.format() + "\n" for e in events)


def parse_trace_line(line: str) -> TraceEvent:
    time, kind, subject, detail = line.rstrip("\n").split("\t")
    pairs = tuple(tuple(item.split("=", 1)) for item in detail.split(" ") if item)
    return TraceEvent(int(time), EventKind(kind), subject, pairs)


class EnqueueOutcome(str, enum.Enum):
    ENQUEUED = "enqueued"
    REJECTED = "rejected"
    OVERFLOW = "overflow"
    SCHEDULED = "scheduled"   # arrival lies in the future; decided when reached


@dataclass(frozen=True)
class SporadicSource:
    seed: int
    mit: int
    kinds: tuple                      # ((kind, weight), ...)
    targets: tuple = ()               # ids to replace; empty = every component


@dataclass(frozen=True)
class SimConfig:
    initial_state: SystemState
    horizon: int
    mgmt_priority_mode: str = HIGHEST
    queue_capacity: int = 16
    requests: tuple = ()              # ((time, Request), ...)
    sporadic: Optional[SporadicSource] = None
    record_trace: bool = True


@dataclass
class ComponentStats:
    released: int = 0
    completed: int = 0
    missed: int = 0
    worst_response: int = 0


@dataclass
class RequestStats:
    id: str
    kind: str
    enqueue: int
    exec_start: Optional[int] = None
    exec_end: Optional[int] = None
    commit: Optional[int] = None
    targets: tuple = ()
    bound: Optional[int] = None
    rejected_at_commit: bool = False

    @property
    def latency(self) -> Optional[int]:
        return None if self.commit is None else self.commit - self.enqueue


@dataclass
class SimSummary:
    components: dict
    requests: list
    misses: int
    rejections: int
    overflows: int
    interferences: int
    activations: int
    ops_executed: int

    def latencies(self) -> list:
        return [r.latency for r in self.requests if r.latency is not None]

    def latency_stats(self):
        lat = self.latencies()
        if not lat:
            return None
        return min(lat), sum(lat) / len(lat), max(lat)


class SimulationError(ValueError):
    pass


class _Job:
    __slots__ = ("cid", "index", "release", "deadline", "remaining", "started", "missed", "key")

    def __init__(self, cid, index, release, deadline, remaining, period=0):
        self.cid = cid
        # rate-monotonic key fixed at release: a job keeps the priority it was released with
        self.key = (period, cid)
        self.index = index
        self.release = release
        self.deadline = deadline
        self.remaining = remaining
        self.started = False
        self.missed = False


class _Live:
    __slots__ = ("component", "jobs", "next_release", "last_release", "seq", "deferred", "count",
                 "stats")

    def __init__(self, component, stats, next_release=0, count=0):
        self.component = component
        self.stats = stats
        self.jobs = deque()
        self.next_release = next_release
        self.last_release = None
        self.seq = 0
        self.deferred = False
        self.count = count


@dataclass
class _Op:
    request: Request
    cost: int
    targets: frozenset
    stats: RequestStats
    remaining: int = 0
    started: bool = False
    ended: bool = False


def generate_sporadic_requests(seed: int, mit: int, horizon: int, kinds: Sequence,
                               make_payload: Optional[Callable] = None) -> list:
    """Seeded sporadic arrivals with gaps of at least ``mit``.

    ``kinds`` is a sequence of ``(kind, weight)`` pairs.  ``make_payload`` is
    called as ``make_payload(rng, kind)``; without it payloads are ``None``.
    """
    if mit < 1:
        raise ValueError("mit must be >= 1")
    kinds = list(kinds)
    if not kinds:
        raise ValueError("empty kind set")
    rng = random.Random(seed)
    names = [k for k, _ in kinds]
    weights = [w for _, w in kinds]
    out = []
    t = rng.randrange(mit)
    i = 0
    while t < horizon:
        kind = rng.choices(names, weights)[0]
        payload = make_payload(rng, kind) if make_payload else None
        out.append((t, Request(f"s{i}", kind, payload, t)))
        i += 1
        t += mit + rng.randrange(mit // 4 + 1)
    return out


def replace_payload_factory(state: SystemState, targets: Sequence[str] = ()):
    """Payload maker that reinstantiates a random target with its current parameters."""
    ids = sorted(targets) if targets else sorted(state.task_set.ids)

    def make(rng, kind):
        return ReplacePayload(state.task_set.get(rng.choice(ids)))
    return make


class Simulation:
    """Single-threaded simulation state machine; see the module docstring."""

    def __init__(self, cfg: SimConfig):
        if cfg.horizon < 1:
            raise SimulationError("horizon must be >= 1")
        if cfg.queue_capacity < 1:
            raise SimulationError("queue capacity must be >= 1")
        if cfg.mgmt_priority_mode not in (HIGHEST, LOWEST):
            raise SimulationError(f"unknown priority mode {cfg.mgmt_priority_mode!r}")
        state = cfg.initial_state
        problems = validate_taskset(state.task_set) + [
            m for m in state.mgmt.violations()]
        if problems:
            raise SimulationError("invalid initial state: " + "; ".join(
                getattr(p, "message", p) for p in problems))
        self.cfg = cfg
        self.state = state
        self.mode = cfg.mgmt_priority_mode
        self.warnings = []
        if not analysis.response_time_with_mgmt(state.task_set, state.mgmt).schedulable:
            msg = "initial state is not schedulable with management interference"
            self.warnings.append(msg)
            log.warning(msg)

        self.now = 0
        self._fresh = True
        self.trace = []
        self._record = cfg.record_trace
        self._live = {}
        self._releases = []       # (time, cid, seq)
        self._arrivals = []       # (time, n, request)
        self._arr_seq = 0
        self._queue = deque()
        self._ops = []            # executing or awaiting commit, in dequeue order
        self._current_op = None   # op holding (or waiting for) the processor
        self._running = None      # _Job or _Op
        self._held = set()
        self._ready = set()       # ids with a pending job
        self._next_deadline = None
        self.stats = {}
        self.requests = []
        self.misses = self.rejections = self.overflows = 0
        self.interferences = self.activations = self.ops_executed = 0

        for comp in state.task_set.components:
            self._add_live(comp, 0)
        self._inert = state.mgmt.cost == 0
        self.next_activation = None if self._inert else 0

        for t, req in cfg.requests:
            self.enqueue_request(req, t)
        if cfg.sporadic is not None:
            src = cfg.sporadic
            factory = replace_payload_factory(state, src.targets)
            for t, req in generate_sporadic_requests(src.seed, src.mit, cfg.horizon,
                                                     src.kinds, factory):
                self.enqueue_request(req, t)

    # -- bookkeeping -------------------------------------------------------

    def _emit(self, kind, subject, *detail):
        if self._record:
            self.trace.append(TraceEvent(self.now, kind, subject, detail))

    def _add_live(self, comp, release_at):
        stats = self.stats.setdefault(comp.id, ComponentStats())
        # job numbers stay unique per id even when an id is removed and re-added
        live = _Live(comp, stats, next_release=release_at, count=stats.released)
        self._live[comp.id] = live
        heapq.heappush(self._releases, (release_at, comp.id, live.seq))

    def _reschedule(self, live, at):
        live.seq += 1
        live.next_release = at
        heapq.heappush(self._releases, (at, live.component.id, live.seq))

    @property
    def queue(self) -> list:
        return list(self._queue)

    def pending_releases(self) -> list:
        """Component ids with a release due at the current tick that is not yet processed."""
        return sorted(cid for cid, live in self._live.items()
                      if live.next_release == self.now and (self._fresh or live.deferred))

    # -- public API -------------------------------------------------------

    def enqueue_request(self, req: Request, at: int) -> EnqueueOutcome:
        if at < self.now:
            raise SimulationError(f"request time {at} is in the past (now {self.now})")
        req = replace(req, enqueue_time=at)
        if at > self.now:
            heapq.heappush(self._arrivals, (at, self._arr_seq, req))
            self._arr_seq += 1
            return EnqueueOutcome.SCHEDULED
        return self._arrive(req)

    def run_until(self, t: int):
        """Advance through tick ``t`` inclusive; return ``(new_events, summary)``."""
        if t > self.cfg.horizon:
            raise SimulationError(f"time {t} beyond horizon {self.cfg.horizon}")
        mark = len(self.trace)
        if self._fresh:
            if t < 0:
                return [], self.summary()
            self._fresh = False
            self._run(t, True)
        else:
            self._run(t, False)
        return self.trace[mark:], self.summary()

    def summary(self) -> SimSummary:
        return SimSummary(
            components=dict(self.stats), requests=list(self.requests), misses=self.misses,
            rejections=self.rejections, overflows=self.overflows,
            interferences=self.interferences, activations=self.activations,
            ops_executed=self.ops_executed)

    # -- main loop ----------------------------------------------------------
    #
    # One iteration processes the tick at ``self.now`` and then jumps to the
    # next instant at which anything can happen.  The common path (releases,
    # completions, dispatch) is inlined; this loop dominates long runs.

    def _run(self, until, tick_now):
        live, ready = self._live, self._ready
        rel, arrivals = self._releases, self._arrivals
        record = self._record
        highest = self.mode == HIGHEST
        heappop, heappush = heapq.heappop, heapq.heappush
        while True:
            if tick_now:
                t = self.now
                run = self._running
                if run is not None and run.remaining == 0:
                    self._running = None
                    if run.__class__ is _Job:
                        lv = live[run.cid]
                        lv.jobs.popleft()
                        if not lv.jobs:
                            ready.discard(run.cid)
                        st = lv.stats
                        st.completed += 1
                        resp = t - run.release
                        if resp > st.worst_response:
                            st.worst_response = resp
                        if record:
                            self._emit(EventKind.JOB_COMPLETE, run.cid, ("job", run.index), ("response", resp))
                    else:
                        self._end_op(run)

                # _next_deadline can only be early (after completions), never
                # late, so nothing can be due before it
                nd = self._next_deadline
                if nd is not None and nd <= t:
                    self._check_deadlines(t)

                if self._ops:
                    self._try_commits()

                while rel and rel[0][0] <= t:
                    _, cid, seq = heappop(rel)
                    lv = live.get(cid)
                    if lv is None or lv.seq != seq or lv.deferred:
                        continue
                    if cid in self._held:
                        lv.deferred = True
                        continue
                    comp = lv.component
                    job = _Job(cid, lv.count, t, t + comp.deadline, comp.wcet, comp.period)
                    lv.count += 1
                    lv.last_release = t
                    lv.jobs.append(job)
                    nd = self._next_deadline
                    if nd is None or job.deadline < nd:
                        self._next_deadline = job.deadline
                    ready.add(cid)
                    lv.stats.released += 1
                    if record:
                        self._emit(EventKind.JOB_RELEASE, cid, ("job", job.index),
                                   ("deadline", job.deadline), ("wcet", job.remaining))
                    lv.seq += 1
                    lv.next_release = t + comp.period
                    heappush(rel, (lv.next_release, cid, lv.seq))

                while arrivals and arrivals[0][0] <= t:
                    self._arrive(heappop(arrivals)[2])

                na = self.next_activation
                if na is not None and na <= t:
                    self._activate()
                    self.next_activation = t + self.state.mgmt.period

                # dispatch
                op = self._current_op
                if op is not None and highest:
                    chosen = op
                else:
                    chosen = None
                    held = self._held
                    for cid in ready:
                        job = live[cid].jobs[0]
                        if chosen is None or job.key < chosen.key:
                            if not (held and cid in held and not job.started):
                                chosen = job
                    if chosen is None:
                        chosen = op
                if chosen is not self._running:
                    if record or self._ops or chosen is None or chosen.__class__ is not _Job:
                        self._switch(chosen)
                    else:
                        # silent job switch with no operation to interfere with
                        self._running = chosen
                        chosen.started = True
            tick_now = True

            # next instant of interest
            now = self.now
            run = self._running
            best = None if run is None else now + run.remaining
            while rel:
                _, cid, seq = rel[0]
                lv = live.get(cid)
                if lv is not None and lv.seq == seq and not lv.deferred:
                    if best is None or rel[0][0] < best:
                        best = rel[0][0]
                    break
                heappop(rel)
            c = self._next_deadline
            if c is not None and (best is None or c < best):
                best = c
            if arrivals and (best is None or arrivals[0][0] < best):
                best = arrivals[0][0]
            c = self.next_activation
            if c is not None and (best is None or c < best):
                best = c

            if best is None or best > until:
                if until > now:
                    if run is not None:
                        run.remaining -= until - now
                    self.now = until
                return
            if run is not None:
                run.remaining -= best - now
            self.now = best

    def _check_deadlines(self, t):
        missed = []
        nxt = None
        live = self._live
        for cid in self._ready:
            for job in live[cid].jobs:
                if job.deadline > t:
                    if nxt is None or job.deadline < nxt:
                        nxt = job.deadline
                    break
                if not job.missed:
                    missed.append(job)
        self._next_deadline = nxt
        for job in sorted(missed, key=lambda j: (j.key, j.index)):
            job.missed = True
            self.misses += 1
            self.stats[job.cid].missed += 1
            self._emit(EventKind.DEADLINE_MISS, job.cid, ("job", job.index),
                       ("deadline", job.deadline), ("remaining", job.remaining))

    # -- requests and the management task ------------------------------------

    def _arrive(self, req: Request) -> EnqueueOutcome:
        try:
            decision = admit_request(self.state, req)
        except UnknownKindError:
            self.rejections += 1
            self._emit(EventKind.REQUEST_REJECTED, req.id, ("kind", req.kind),
                       ("reason", "unregistered_kind"))
            return EnqueueOutcome.REJECTED
        if not decision.accepted:
            self.rejections += 1
            self._emit(EventKind.REQUEST_REJECTED, req.id, ("kind", req.kind),
                       ("reason", decision.reason.value))
            return EnqueueOutcome.REJECTED
        if len(self._queue) >= self.cfg.queue_capacity:
            self.overflows += 1
            self._emit(EventKind.QUEUE_OVERFLOW, req.id, ("kind", req.kind),
                       ("capacity", self.cfg.queue_capacity))
            return EnqueueOutcome.OVERFLOW
        self._queue.append(req)
        self._emit(EventKind.REQUEST_ENQUEUED, req.id, ("kind", req.kind),
                   ("position", len(self._queue) - 1))
        return EnqueueOutcome.ENQUEUED

    def _activate(self):
        self.activations += 1
        self._emit(EventKind.MGMT_ACTIVATE, MGMT, ("queue", len(self._queue)))
        if self._current_op is not None:
            # lowest mode only: the previous operation has not finished yet
            self._emit(EventKind.MGMT_IDLE, MGMT, ("reason", "busy"))
            return
        if not self._queue:
            self._emit(EventKind.MGMT_IDLE, MGMT, ("reason", "empty"))
            return
        req = self._queue.popleft()
        cost = self.state.registry.get(req.kind).wcet if req.kind in self.state.registry \
            else self.state.mgmt.cost
        targets = request_targets(req.payload)
        stats = RequestStats(req.id, req.kind, req.enqueue_time, targets=tuple(sorted(targets)))
        periods = [self._target_period(c, req.payload) for c in targets]
        stats.bound = req.enqueue_time + self.state.mgmt.period + self.state.mgmt.cost + max(periods, default=0)
        self.requests.append(stats)
        op = _Op(req, cost, targets, stats, remaining=cost)
        self._ops.append(op)
        self._current_op = op

    def _target_period(self, cid, payload):
        live = self._live.get(cid)
        if live is not None:
            return live.component.period
        if isinstance(payload, AddPayload) and payload.component.id == cid:
            return payload.component.period
        return 0

    def _start_op(self, op):
        op.started = True
        op.stats.exec_start = self.now
        self.ops_executed += 1
        self._emit(EventKind.OP_EXEC_START, op.request.id, ("kind", op.request.kind),
                   ("cost", op.cost), ("targets", ",".join(sorted(op.targets))))

    def _end_op(self, op):
        op.ended = True
        op.stats.exec_end = self.now
        self._current_op = None
        self._emit(EventKind.OP_EXEC_END, op.request.id, ("kind", op.request.kind))
        self._refresh_held()

    def _in_flight(self, cid) -> bool:
        live = self._live.get(cid)
        return live is not None and bool(live.jobs) and live.jobs[0].started

    def _try_commits(self):
        if not self._ops:
            return
        blocked = set()
        remaining = []
        for op in self._ops:
            if (op.ended and not (op.targets & blocked)
                    and not any(self._in_flight(c) for c in op.targets)):
                self._commit(op)
            else:
                remaining.append(op)
                blocked |= op.targets
        self._ops = remaining
        self._refresh_held()

    def _commit(self, op):
        req = op.request
        try:
            decision = admit_request(self.state, req)
        except UnknownKindError:
            decision = None
        if decision is None or not decision.accepted:
            op.stats.rejected_at_commit = True
            self.rejections += 1
            reason = "unregistered_kind" if decision is None else decision.reason.value
            self._emit(EventKind.REQUEST_REJECTED, req.id, ("kind", req.kind),
                       ("reason", reason), ("stage", "commit"))
            return
        self.state = apply_payload(self.state, req.payload)
        op.stats.commit = self.now
        self._emit(EventKind.OP_COMMIT, req.id, ("kind", req.kind),
                   ("latency", self.now - op.stats.enqueue))
        self._sync_live(req.payload)

    def _sync_live(self, payload):
        comps = {c.id: c for c in self.state.task_set.components}
        for cid in list(self._live):
            if cid not in comps:
                live = self._live.pop(cid)
                live.seq += 1
                for job in live.jobs:
                    job.remaining = 0
                self._ready.discard(cid)
        for cid, comp in comps.items():
            live = self._live.get(cid)
            if live is None:
                self._add_live(comp, self.now)
                continue
            old = live.component
            live.component = comp
            if (old.wcet, old.period, old.deadline) != (comp.wcet, comp.period, comp.deadline):
                # jobs already released finish under the parameters they were released with
                base = live.last_release + comp.period if live.last_release is not None else self.now
                self._reschedule(live, max(live.next_release, base))
            if live.deferred:
                live.deferred = False
                self._reschedule(live, self.now)

    def _refresh_held(self):
        held = set()
        for op in self._ops:
            if op.ended:
                held |= op.targets
        self._held = held
        for cid, live in self._live.items():
            if live.deferred and cid not in held:
                live.deferred = False
                self._reschedule(live, self.now)

    # -- dispatch ---------------------------------------------------------

    def _switch(self, chosen):
        """Hand the processor to ``chosen`` (a job, an operation or None)."""
        prev = self._running
        rec = self._record
        if prev is not None and rec:
            if isinstance(prev, _Job):
                self._emit(EventKind.JOB_PREEMPT, prev.cid, ("job", prev.index),
                           ("remaining", prev.remaining))
            else:
                self._emit(EventKind.JOB_PREEMPT, MGMT, ("request", prev.request.id),
                           ("remaining", prev.remaining))
        self._running = chosen
        if chosen is None:
            return
        if isinstance(chosen, _Op):
            if not chosen.started:
                self._start_op(chosen)
            elif rec:
                self._emit(EventKind.JOB_RESUME, MGMT, ("request", chosen.request.id))
            return
        if chosen.started:
            if rec:
                self._emit(EventKind.JOB_RESUME, chosen.cid, ("job", chosen.index))
        else:
            chosen.started = True
            if rec:
                self._emit(EventKind.JOB_START, chosen.cid, ("job", chosen.index))
        for o in self._ops:
            if chosen.cid in o.targets and o.started and not o.ended:
                self.interferences += 1
                self._emit(EventKind.INTERFERENCE_DETECTED, chosen.cid,
                           ("request", o.request.id), ("job", chosen.index))


def new_simulation(cfg: SimConfig) -> Simulation:
    return Simulation(cfg)


def enqueue_request(sim: Simulation, req: Request, at: int) -> EnqueueOutcome:
    return sim.enqueue_request(req, at)


def run_until(sim: Simulation, t: int):
    return sim.run_until(t)


def simulate(state: SystemState, horizon: int, **kwargs):
    """Run a fresh simulation to ``horizon`` and return ``(trace, summary)``."""
    sim = Simulation(SimConfig(state, horizon, **kwargs))
    sim.run_until(horizon)
    return sim.trace, sim.summary()
