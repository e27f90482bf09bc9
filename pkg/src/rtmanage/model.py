"""Domain types for a dynamic component-based real-time system.

A component is a periodic task (wcet, period, deadline) with named ports.
Bindings connect a component's required port to another component's
provided port.  All values are immutable; the ``apply_*`` functions return
new states and raise :class:`ModelError` subclasses without touching their
input.

Times are integer ticks throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Union

# Standard operation kinds.  Any other string is a user-named extension.
ADD = "add"
REMOVE = "remove"
MODIFY_PARAMS = "modify_params"
MODIFY_BINDINGS = "modify_bindings"
REPLACE = "replace"
STANDARD_KINDS = (ADD, REMOVE, MODIFY_PARAMS, MODIFY_BINDINGS, REPLACE)


class ModelError(ValueError):
    """Base class for rejected structural operations."""


class DuplicateIdError(ModelError):
    pass


class UnknownComponentError(ModelError):
    pass


class InvalidComponentError(ModelError):
    pass


class DanglingBindingError(ModelError):
    pass


class DuplicatePortBindingError(ModelError):
    pass


class StillReferencedError(ModelError):
    pass


class MissingBindingError(ModelError):
    pass


class PortDropError(ModelError):
    pass


@dataclass(frozen=True)
class Component:
    id: str
    wcet: int
    period: int
    deadline: int
    priority: int = -1
    provided_ports: frozenset = frozenset()
    required_ports: frozenset = frozenset()

    def __post_init__(self):
        # accept any iterable of names for the port sets
        object.__setattr__(self, "provided_ports", frozenset(self.provided_ports))
        object.__setattr__(self, "required_ports", frozenset(self.required_ports))

    @property
    def utilization(self) -> float:
        return self.wcet / self.period

    def violations(self) -> list[str]:
        out = []
        if self.wcet < 1:
            out.append(f"wcet < 1 for {self.id}")
        if self.period < self.wcet:
            out.append(f"period < wcet for {self.id}")
        if self.deadline > self.period:
            out.append(f"deadline > period for {self.id}")
        if self.deadline < self.wcet:
            out.append(f"deadline < wcet for {self.id}")
        return out


@dataclass(frozen=True, order=True)
class Binding:
    """Connects ``client.client_port`` (required) to ``server.server_port`` (provided)."""

    client: str
    client_port: str
    server: str
    server_port: str

    def __str__(self):
        return f"{self.client}.{self.client_port}->{self.server}.{self.server_port}"


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    message: str


@dataclass(frozen=True)
class TaskSet:
    components: tuple = ()
    bindings: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "bindings", tuple(sorted(self.bindings)))

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __contains__(self, cid) -> bool:
        return any(c.id == cid for c in self.components)

    def get(self, cid: str) -> Component:
        for c in self.components:
            if c.id == cid:
                return c
        raise UnknownComponentError(f"unknown component {cid!r}")

    @property
    def ids(self) -> list[str]:
        return [c.id for c in self.components]

    @property
    def periods(self) -> list[int]:
        return [c.period for c in self.components]

    @property
    def utilization(self) -> float:
        return sum(c.utilization for c in self.components)


@dataclass(frozen=True)
class ManagementOpSpec:
    kind: str
    wcet: int


@dataclass(frozen=True)
class OpRegistry:
    specs: tuple = ()

    def __post_init__(self):
        specs = tuple(sorted(self.specs, key=lambda s: s.kind))
        kinds = [s.kind for s in specs]
        if len(set(kinds)) != len(kinds):
            raise ValueError(f"duplicate operation kinds in {kinds}")
        object.__setattr__(self, "specs", specs)

    def __contains__(self, kind) -> bool:
        return any(s.kind == kind for s in self.specs)

    def __len__(self):
        return len(self.specs)

    def get(self, kind: str) -> ManagementOpSpec:
        for s in self.specs:
            if s.kind == kind:
                return s
        raise KeyError(kind)

    @property
    def cmanag(self) -> int:
        return max((s.wcet for s in self.specs), default=0)

    def with_spec(self, spec: ManagementOpSpec) -> "OpRegistry":
        return OpRegistry(self.specs + (spec,))

    def without(self, kind: str) -> "OpRegistry":
        if kind not in self:
            raise KeyError(kind)
        return OpRegistry(tuple(s for s in self.specs if s.kind != kind))


@dataclass(frozen=True)
class ManagementTaskConfig:
    cost: int
    period: int
    deadline: int

    @classmethod
    def sized(cls, cost: int, period: int) -> "ManagementTaskConfig":
        # the deadline always tracks the cost
        return cls(cost=cost, period=period, deadline=cost)

    def with_cost(self, cost: int) -> "ManagementTaskConfig":
        return ManagementTaskConfig(cost=cost, period=self.period, deadline=cost)

    def violations(self) -> list[str]:
        out = []
        if self.deadline != self.cost:
            out.append("management deadline != cost")
        if self.period < 1:
            out.append("management period < 1")
        if self.period < self.cost:
            out.append("management period < cost")
        return out


# Request payloads.  The payload type decides which structural change a
# request performs; standard kinds pin the payload type.


@dataclass(frozen=True)
class AddPayload:
    component: Component
    bindings: tuple = ()


@dataclass(frozen=True)
class RemovePayload:
    target: str


@dataclass(frozen=True)
class ModifyParamsPayload:
    target: str
    wcet: int
    period: int
    deadline: int


@dataclass(frozen=True)
class RebindPayload:
    remove: tuple = ()
    add: tuple = ()


@dataclass(frozen=True)
class ReplacePayload:
    component: Component


Payload = Union[AddPayload, RemovePayload, ModifyParamsPayload, RebindPayload, ReplacePayload]

PAYLOAD_FOR_KIND = {
    ADD: AddPayload,
    REMOVE: RemovePayload,
    MODIFY_PARAMS: ModifyParamsPayload,
    MODIFY_BINDINGS: RebindPayload,
    REPLACE: ReplacePayload,
}


@dataclass(frozen=True)
class Request:
    id: str
    kind: str
    payload: Payload
    enqueue_time: int = 0

    def payload_matches_kind(self) -> bool:
        expected = PAYLOAD_FOR_KIND.get(self.kind)
        if expected is None:
            return isinstance(self.payload, tuple(PAYLOAD_FOR_KIND.values()))
        return isinstance(self.payload, expected)


def request_targets(payload: Payload) -> frozenset:
    """Ids of the components a structural change touches."""
    if isinstance(payload, AddPayload):
        ids = {payload.component.id}
        for b in payload.bindings:
            ids.update((b.client, b.server))
        return frozenset(ids)
    if isinstance(payload, (RemovePayload, ModifyParamsPayload)):
        return frozenset({payload.target})
    if isinstance(payload, ReplacePayload):
        return frozenset({payload.component.id})
    if isinstance(payload, RebindPayload):
        ids = set()
        for b in payload.remove + payload.add:
            ids.update((b.client, b.server))
        return frozenset(ids)
    raise TypeError(f"not a payload: {payload!r}")


@dataclass(frozen=True)
class SystemState:
    task_set: TaskSet
    registry: OpRegistry = field(default_factory=OpRegistry)
    mgmt: ManagementTaskConfig = field(
        default_factory=lambda: ManagementTaskConfig(cost=0, period=1, deadline=0))


def rank_by_rms(ts: TaskSet) -> TaskSet:
    """Shorter period gets the higher priority (rank 0); ties go by id."""
    ordered = sorted(ts.components, key=lambda c: (c.period, c.id))
    comps = tuple(c if c.priority == rank else replace(c, priority=rank)
                  for rank, c in enumerate(ordered))
    return TaskSet(comps, ts.bindings)


def validate_taskset(ts: TaskSet) -> list[Violation]:
    report = []
    seen = set()
    for c in ts.components:
        if c.id in seen:
            report.append(Violation("duplicate_id", c.id, f"duplicate component id {c.id}"))
        seen.add(c.id)
        for msg in c.violations():
            report.append(Violation("component", c.id, msg))

    by_id = {c.id: c for c in ts.components}
    bound = {}
    for b in ts.bindings:
        client, server = by_id.get(b.client), by_id.get(b.server)
        if client is None or server is None:
            missing = b.client if client is None else b.server
            report.append(Violation("dangling_binding", str(b),
                                    f"dangling binding {b}: no component {missing}"))
            continue
        if b.client_port not in client.required_ports:
            report.append(Violation("dangling_binding", str(b),
                                    f"dangling binding {b}: {b.client} has no required port {b.client_port}"))
        if b.server_port not in server.provided_ports:
            report.append(Violation("dangling_binding", str(b),
                                    f"dangling binding {b}: {b.server} has no provided port {b.server_port}"))
        key = (b.client, b.client_port)
        if key in bound:
            report.append(Violation("duplicate_port_binding", str(b),
                                    f"required port {b.client}.{b.client_port} bound twice"))
        bound[key] = b

    ranks = [c.priority for c in ts.components]
    if ranks and sorted(ranks) != list(range(len(ranks))):
        report.append(Violation("priority", "", f"priorities {ranks} are not a permutation of 0..{len(ranks) - 1}"))
    return report


def _check_component(c: Component):
    problems = c.violations()
    if problems:
        raise InvalidComponentError("; ".join(problems))


def _check_bindings(components: Mapping[str, Component], bindings: Iterable[Binding]):
    bound = set()
    for b in bindings:
        client, server = components.get(b.client), components.get(b.server)
        if client is None or server is None:
            raise DanglingBindingError(f"dangling binding {b}")
        if b.client_port not in client.required_ports or b.server_port not in server.provided_ports:
            raise DanglingBindingError(f"dangling binding {b}: no such port")
        key = (b.client, b.client_port)
        if key in bound:
            raise DuplicatePortBindingError(f"required port {b.client}.{b.client_port} bound twice")
        bound.add(key)


def _with_task_set(state: SystemState, components, bindings) -> SystemState:
    return replace(state, task_set=rank_by_rms(TaskSet(tuple(components), tuple(bindings))))


def apply_add(state: SystemState, new: Component, new_bindings: Iterable[Binding] = ()) -> SystemState:
    ts = state.task_set
    if new.id in ts:
        raise DuplicateIdError(f"component {new.id} already exists")
    _check_component(new)
    comps = {c.id: c for c in ts.components}
    comps[new.id] = new
    bindings = list(ts.bindings) + list(new_bindings)
    _check_bindings(comps, bindings)
    return _with_task_set(state, comps.values(), bindings)


def apply_remove(state: SystemState, target: str) -> SystemState:
    ts = state.task_set
    ts.get(target)
    holders = [b for b in ts.bindings if b.server == target and b.client != target]
    if holders:
        raise StillReferencedError(
            f"{target} is still referenced by " + ", ".join(str(b) for b in holders))
    comps = [c for c in ts.components if c.id != target]
    bindings = [b for b in ts.bindings if b.client != target]
    return _with_task_set(state, comps, bindings)


def apply_modify_params(state: SystemState, target: str, new_wcet: int, new_period: int,
                        new_deadline: int) -> SystemState:
    ts = state.task_set
    old = ts.get(target)
    new = replace(old, wcet=new_wcet, period=new_period, deadline=new_deadline)
    _check_component(new)
    comps = [new if c.id == target else c for c in ts.components]
    return _with_task_set(state, comps, ts.bindings)


def apply_rebind(state: SystemState, remove: Iterable[Binding] = (), add: Iterable[Binding] = ()) -> SystemState:
    ts = state.task_set
    current = list(ts.bindings)
    for b in remove:
        if b not in current:
            raise MissingBindingError(f"no binding {b}")
        current.remove(b)
    current.extend(add)
    _check_bindings({c.id: c for c in ts.components}, current)
    return _with_task_set(state, ts.components, current)


def apply_replace(state: SystemState, target: str, replacement: Component) -> SystemState:
    ts = state.task_set
    ts.get(target)
    if replacement.id != target:
        raise InvalidComponentError(
            f"replacement id {replacement.id} must match target {target}")
    _check_component(replacement)
    for b in ts.bindings:
        if b.client == target and b.client_port not in replacement.required_ports:
            raise PortDropError(f"replacement drops required port {b.client_port} bound by {b}")
        if b.server == target and b.server_port not in replacement.provided_ports:
            raise PortDropError(f"replacement drops provided port {b.server_port} bound by {b}")
    comps = [replacement if c.id == target else c for c in ts.components]
    return _with_task_set(state, comps, ts.bindings)


def apply_payload(state: SystemState, payload: Payload) -> SystemState:
    """Dispatch a request payload to the matching ``apply_*`` function."""
    if isinstance(payload, AddPayload):
        return apply_add(state, payload.component, payload.bindings)
    if isinstance(payload, RemovePayload):
        return apply_remove(state, payload.target)
    if isinstance(payload, ModifyParamsPayload):
        return apply_modify_params(state, payload.target, payload.wcet,
                                   payload.period, payload.deadline)
    if isinstance(payload, RebindPayload):
        return apply_rebind(state, payload.remove, payload.add)
    if isinstance(payload, ReplacePayload):
        return apply_replace(state, payload.component.id, payload.component)
    raise TypeError(f"not a payload: {payload!r}")


def make_state(components: Iterable[Component], bindings: Iterable[Binding] = (),
               registry: Optional[OpRegistry] = None, mgmt_period: int = 1) -> SystemState:
    """Convenience constructor: RMS-ranks the components and sizes the management task."""
    registry = registry or OpRegistry()
    ts = rank_by_rms(TaskSet(tuple(components), tuple(bindings)))
    return SystemState(ts, registry, ManagementTaskConfig.sized(registry.cmanag, mgmt_period))
