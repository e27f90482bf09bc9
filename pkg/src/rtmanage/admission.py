"""On-line acceptance tests.

Registering a management operation may raise the reserved management cost
to the new operation's WCET; the response-time test with management
interference then decides whether the raise is affordable.  Operations no
more expensive than the current reservation skip the test entirely.

Individual requests are checked structurally against the current task set
and, when they change temporal load, by the same response-time test on the
post-operation task set.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

from .analysis import ResponseTimeReport, response_time_with_mgmt
from .model import (
    AddPayload,
    ManagementOpSpec,
    ManagementTaskConfig,
    ModelError,
    ModifyParamsPayload,
    ReplacePayload,
    Request,
    SystemState,
    apply_payload,
)


class Reason(str, enum.Enum):
    FAST_PATH = "fast_path"
    RTA_PASS = "rta_pass"
    RTA_FAIL = "rta_fail"
    INVALID_PAYLOAD = "invalid_payload"
    STRUCTURAL_FAIL = "structural_fail"


class AdmissionError(ValueError):
    pass


class DuplicateKindError(AdmissionError):
    pass


class UnknownKindError(AdmissionError):
    pass


@dataclass(frozen=True)
class AdmissionDecision:
    accepted: bool
    reason: Reason
    before: ManagementTaskConfig
    after: ManagementTaskConfig
    report: Optional[ResponseTimeReport] = None
    message: str = ""

    @property
    def rta_run(self) -> bool:
        return self.report is not None


def register_operation(state: SystemState, spec: ManagementOpSpec):
    """Run the acceptance test for a new operation kind.

    Returns ``(new_state, decision)``; on rejection ``new_state is state``.
    """
    if spec.kind in state.registry:
        raise DuplicateKindError(f"operation kind {spec.kind!r} already registered")
    if spec.wcet < 1:
        raise AdmissionError(f"operation wcet must be >= 1, got {spec.wcet}")

    before = state.mgmt
    if spec.wcet <= before.cost:
        new_state = replace(state, registry=state.registry.with_spec(spec))
        return new_state, AdmissionDecision(True, Reason.FAST_PATH, before, before)

    candidate = before.with_cost(max(before.cost, spec.wcet))
    if candidate.cost > candidate.period:
        return state, AdmissionDecision(
            False, Reason.RTA_FAIL, before, before,
            message=f"cost {candidate.cost} exceeds management period {candidate.period}")
    report = response_time_with_mgmt(state.task_set, candidate)
    if not report.schedulable:
        return state, AdmissionDecision(False, Reason.RTA_FAIL, before, before, report)
    new_state = replace(state, registry=state.registry.with_spec(spec), mgmt=candidate)
    return new_state, AdmissionDecision(True, Reason.RTA_PASS, before, candidate, report)


def unregister_operation(state: SystemState, kind: str) -> SystemState:
    # shrinking the reservation can only shorten response times
    if kind not in state.registry:
        raise UnknownKindError(f"operation kind {kind!r} is not registered")
    registry = state.registry.without(kind)
    return replace(state, registry=registry, mgmt=state.mgmt.with_cost(registry.cmanag))


def changes_load(state: SystemState, payload) -> bool:
    if isinstance(payload, AddPayload):
        return True
    if isinstance(payload, ModifyParamsPayload):
        old = state.task_set.get(payload.target)
        return (old.wcet, old.period, old.deadline) != (payload.wcet, payload.period, payload.deadline)
    if isinstance(payload, ReplacePayload):
        new = payload.component
        old = state.task_set.get(new.id)
        return (old.wcet, old.period, old.deadline) != (new.wcet, new.period, new.deadline)
    return False


def admit_request(state: SystemState, req: Request) -> AdmissionDecision:
    """Decide whether ``req`` may be queued against ``state``."""
    if req.kind not in state.registry:
        raise UnknownKindError(f"operation kind {req.kind!r} is not registered")
    mgmt = state.mgmt
    if not req.payload_matches_kind():
        return AdmissionDecision(False, Reason.INVALID_PAYLOAD, mgmt, mgmt,
                                 message=f"payload {type(req.payload).__name__} does not fit kind {req.kind}")
    try:
        post = apply_payload(state, req.payload)
    except ModelError as exc:
        return AdmissionDecision(False, Reason.INVALID_PAYLOAD, mgmt, mgmt, message=str(exc))

    if not changes_load(state, req.payload):
        return AdmissionDecision(True, Reason.FAST_PATH, mgmt, mgmt)
    report = response_time_with_mgmt(post.task_set, mgmt)
    if report.schedulable:
        return AdmissionDecision(True, Reason.RTA_PASS, mgmt, mgmt, report)
    return AdmissionDecision(False, Reason.STRUCTURAL_FAIL, mgmt, mgmt, report,
                             message="post-operation task set is unschedulable")
