"""JSON scenario documents.

A scenario bundles a component set, its bindings, the registered management
operations, how the management period is sized, and an optional simulation
block.  ``parse_scenario`` validates and reports every problem it finds with
a JSON path and, where it can, the line the offending value starts on.
``serialize_scenario`` writes the canonical form; parsing canonical text and
serializing it again reproduces the same document.

Canonical form: empty port lists, absent optional fields and default
simulation settings are omitted; everything else keeps its given order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

from . import analysis
from .model import (
    STANDARD_KINDS,
    AddPayload,
    Binding,
    Component,
    ManagementOpSpec,
    ManagementTaskConfig,
    ModifyParamsPayload,
    OpRegistry,
    RebindPayload,
    RemovePayload,
    ReplacePayload,
    Request,
    SystemState,
    TaskSet,
    rank_by_rms,
    validate_taskset,
)
from .simulator import HIGHEST, LOWEST, SimConfig, SporadicSource



@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str
    line: Optional[int] = None
    column: Optional[int] = None

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{where}{self.path or '<root>'}: {self.message}"


class ScenarioError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class MgmtSizing:
    period: Optional[int] = None
    utilization: Any = None
    window: Optional[int] = None
    count: Optional[int] = None
    snap: Any = None


@dataclass(frozen=True)
class ScenarioRequest:
    time: int
    id: str
    kind: str
    payload: Any
    action: Optional[str] = None

    def to_request(self) -> Request:
        return Request(self.id, self.kind, self.payload, self.time)


@dataclass(frozen=True)
class SporadicBlock:
    mit: int
    kinds: tuple                 # ((kind, weight), ...)
    targets: tuple = ()


@dataclass(frozen=True)
class SimulationBlock:
    horizon: int
    seed: Optional[int] = None
    queue_capacity: Optional[int] = None
    priority_mode: Optional[str] = None
    requests: tuple = ()
    sporadic: Optional[SporadicBlock] = None


@dataclass(frozen=True)
class Scenario:
    name: str
    tick_unit: str
    components: tuple
    bindings: tuple = ()
    operations: tuple = ()
    mgmt: MgmtSizing = field(default_factory=MgmtSizing)
    simulation: Optional[SimulationBlock] = None

    def registry(self) -> OpRegistry:
        return OpRegistry(self.operations)

    def task_set(self) -> TaskSet:
        return rank_by_rms(TaskSet(self.components, self.bindings))

    def mgmt_period(self) -> int:
        m = self.mgmt
        cost = self.registry().cmanag
        if m.period is not None:
            return m.period
        if m.utilization is None and m.window is None:
            return 1    # no sizing: only legal with an empty registry, task is inert
        if m.utilization is not None:
            candidate = analysis.period_from_utilization(cost, m.utilization)
        else:
            candidate = analysis.period_from_window(m.window, m.count)
        if m.snap is not None:
            candidate = analysis.snap_period_to_existing(candidate, self.task_set(), m.snap)
        return candidate

    def to_state(self) -> SystemState:
        registry = self.registry()
        mgmt = ManagementTaskConfig.sized(registry.cmanag, self.mgmt_period())
        return SystemState(self.task_set(), registry, mgmt)

    def sim_config(self, record_trace: bool = True, seed: Optional[int] = None) -> SimConfig:
        sim = self.simulation
        if sim is None:
            raise ValueError(f"scenario {self.name!r} has no simulation block")
        sporadic = None
        if sim.sporadic is not None:
            s = sim.sporadic
            use_seed = seed if seed is not None else (sim.seed or 0)
            sporadic = SporadicSource(use_seed, s.mit, s.kinds, s.targets)
        return SimConfig(
            initial_state=self.to_state(),
            horizon=sim.horizon,
            mgmt_priority_mode=sim.priority_mode or HIGHEST,
            queue_capacity=sim.queue_capacity or 16,
            requests=tuple((r.time, r.to_request()) for r in sim.requests),
            sporadic=sporadic,
            record_trace=record_trace,
        )


# -- locating values in the source text ----------------------------------------


def _index_positions(text: str) -> dict:
    """Map JSON paths (``components[1].id``) to character offsets."""
    decoder = json.JSONDecoder()
    positions = {}
    ws = " \t\n\r"

    def skip(i):
        while i < len(text) and text[i] in ws:
            i += 1
        return i

    def walk(i, path):
        i = skip(i)
        positions[path] = i
        ch = text[i]
        if ch == "{":
            i = skip(i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                i = skip(i)
                key, i = json.decoder.scanstring(text, i + 1)
                i = skip(i)
                i = walk(i + 1, f"{path}.{key}" if path else key)
                i = skip(i)
                if text[i] == ",":
                    i += 1
                    continue
                return i + 1
        if ch == "[":
            i = skip(i + 1)
            if text[i] == "]":
                return i + 1
            n = 0
            while True:
                i = walk(i, f"{path}[{n}]")
                n += 1
                i = skip(i)
                if text[i] == ",":
                    i += 1
                    continue
                return i + 1
        _, end = decoder.raw_decode(text, i)
        return end

    walk(0, "")
    return positions


def _line_col(text, offset):
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


# -- parsing -----------------------------------------------------------------------


class _Parser:
    def __init__(self):
        self.diags = []

    def error(self, path, message):
        self.diags.append(Diagnostic(path, message))

    def fields(self, obj, path, required, optional=()):
        if not isinstance(obj, dict):
            self.error(path, "expected an object")
            return False
        ok = True
        for key in obj:
            if key not in required and key not in optional:
                self.error(f"{path}.{key}" if path else key, f"unknown field {key!r}")
                ok = False
        for key in required:
            if key not in obj:
                self.error(path, f"missing field {key!r}")
                ok = False
        return ok

    def integer(self, value, path, minimum=None):
        if isinstance(value, bool) or not isinstance(value, int):
            self.error(path, f"expected an integer, got {value!r}")
            return None
        if minimum is not None and value < minimum:
            self.error(path, f"must be >= {minimum}, got {value}")
            return None
        return value

    def number(self, value, path):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.error(path, f"expected a number, got {value!r}")
            return None
        return value

    def string(self, value, path):
        if not isinstance(value, str) or not value:
            self.error(path, f"expected a non-empty string, got {value!r}")
            return None
        return value

    def names(self, value, path):
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            self.error(path, "expected a list of names")
            return ()
        return tuple(value)

    def component(self, obj, path) -> Optional[Component]:
        if not self.fields(obj, path, ("id", "wcet", "period", "deadline"), ("provides", "requires")):
            return None
        cid = self.string(obj["id"], f"{path}.id")
        nums = [self.integer(obj[k], f"{path}.{k}") for k in ("wcet", "period", "deadline")]
        provides = self.names(obj.get("provides", []), f"{path}.provides")
        requires = self.names(obj.get("requires", []), f"{path}.requires")
        if cid is None or None in nums:
            return None
        comp = Component(cid, *nums, provided_ports=provides, required_ports=requires)
        for msg in comp.violations():
            self.error(path, msg)
        return comp

    def binding(self, obj, path) -> Optional[Binding]:
        keys = ("client", "client_port", "server", "server_port")
        if not self.fields(obj, path, keys):
            return None
        vals = [self.string(obj[k], f"{path}.{k}") for k in keys]
        return None if None in vals else Binding(*vals)

    def bindings(self, value, path):
        if not isinstance(value, list):
            self.error(path, "expected a list")
            return ()
        out = [self.binding(b, f"{path}[{i}]") for i, b in enumerate(value)]
        return tuple(b for b in out if b is not None)

    def payload(self, action, obj, path):
        if action == "add":
            if not self.fields(obj, path, ("component",), ("bindings",)):
                return None
            comp = self.component(obj["component"], f"{path}.component")
            binds = self.bindings(obj.get("bindings", []), f"{path}.bindings")
            return None if comp is None else AddPayload(comp, binds)
        if action == "remove":
            if not self.fields(obj, path, ("target",)):
                return None
            target = self.string(obj["target"], f"{path}.target")
            return None if target is None else RemovePayload(target)
        if action == "modify_params":
            if not self.fields(obj, path, ("target", "wcet", "period", "deadline")):
                return None
            target = self.string(obj["target"], f"{path}.target")
            nums = [self.integer(obj[k], f"{path}.{k}") for k in ("wcet", "period", "deadline")]
            return None if target is None or None in nums else ModifyParamsPayload(target, *nums)
        if action == "modify_bindings":
            if not self.fields(obj, path, (), ("remove", "add")):
                return None
            return RebindPayload(self.bindings(obj.get("remove", []), f"{path}.remove"),
                                 self.bindings(obj.get("add", []), f"{path}.add"))
        if action == "replace":
            if not self.fields(obj, path, ("component",)):
                return None
            comp = self.component(obj["component"], f"{path}.component")
            return None if comp is None else ReplacePayload(comp)
        self.error(path, f"unknown action {action!r}")
        return None

    def request(self, obj, path, kinds) -> Optional[ScenarioRequest]:
        if not self.fields(obj, path, ("time", "id", "kind", "payload"), ("action",)):
            return None
        time = self.integer(obj["time"], f"{path}.time", minimum=0)
        rid = self.string(obj["id"], f"{path}.id")
        kind = self.string(obj["kind"], f"{path}.kind")
        action = obj.get("action")
        if kind is not None and kind not in kinds:
            self.error(f"{path}.kind", f"operation kind {kind!r} is not registered")
        if action is None:
            if kind in STANDARD_KINDS:
                resolved = kind
            else:
                self.error(path, f"extension kind {kind!r} needs an 'action'")
                return None
        else:
            resolved = action
            if kind in STANDARD_KINDS and action != kind:
                self.error(f"{path}.action", f"action {action!r} conflicts with kind {kind!r}")
        payload = self.payload(resolved, obj["payload"], f"{path}.payload")
        if None in (time, rid, kind, payload):
            return None
        return ScenarioRequest(time, rid, kind, payload, action)

    def mgmt(self, obj, path) -> MgmtSizing:
        if not self.fields(obj, path, (), ("period", "utilization", "window", "count", "snap")):
            return MgmtSizing()
        modes = [m for m in ("period", "utilization", "window") if m in obj]
        if len(modes) > 1:
            self.error(path, "sizing modes " + ", ".join(modes) + " are mutually exclusive")
        elif not modes:
            self.error(path, "one of period, utilization or window is required")
        if ("window" in obj) != ("count" in obj):
            self.error(path, "window and count must be given together")
        if "snap" in obj and "period" in obj:
            self.error(f"{path}.snap", "snap applies only to utilization or window sizing")
        period = self.integer(obj["period"], f"{path}.period", 1) if "period" in obj else None
        util = None
        if "utilization" in obj:
            util = self.number(obj["utilization"], f"{path}.utilization")
            if util is not None and not 0 < util <= 100:
                self.error(f"{path}.utilization", "must be in (0, 100]")
        window = self.integer(obj["window"], f"{path}.window", 1) if "window" in obj else None
        count = self.integer(obj["count"], f"{path}.count", 1) if "count" in obj else None
        if window is not None and count is not None and window < count:
            self.error(path, f"window {window} shorter than count {count}")
        snap = None
        if "snap" in obj:
            snap = self.number(obj["snap"], f"{path}.snap")
            if snap is not None and snap < 0:
                self.error(f"{path}.snap", "must be >= 0")
        return MgmtSizing(period, util, window, count, snap)

    def simulation(self, obj, path, kinds, ids) -> Optional[SimulationBlock]:
        if not self.fields(obj, path, ("horizon",),
                           ("seed", "queue_capacity", "priority_mode", "requests", "sporadic")):
            return None
        horizon = self.integer(obj["horizon"], f"{path}.horizon", 1)
        seed = self.integer(obj["seed"], f"{path}.seed", 0) if "seed" in obj else None
        cap = self.integer(obj["queue_capacity"], f"{path}.queue_capacity", 1) \
            if "queue_capacity" in obj else None
        mode = obj.get("priority_mode")
        if mode is not None and mode not in (HIGHEST, LOWEST):
            self.error(f"{path}.priority_mode", f"expected 'highest' or 'lowest', got {mode!r}")
        requests = []
        raw = obj.get("requests", [])
        if not isinstance(raw, list):
            self.error(f"{path}.requests", "expected a list")
            raw = []
        seen = set()
        for i, r in enumerate(raw):
            req = self.request(r, f"{path}.requests[{i}]", kinds)
            if req is None:
                continue
            if req.id in seen:
                self.error(f"{path}.requests[{i}].id", f"duplicate request id {req.id}")
            seen.add(req.id)
            requests.append(req)
        sporadic = None
        if "sporadic" in obj:
            sp = obj["sporadic"]
            spath = f"{path}.sporadic"
            if self.fields(sp, spath, ("mit", "kinds"), ("targets",)):
                mit = self.integer(sp["mit"], f"{spath}.mit", 1)
                weights = sp["kinds"]
                pairs = []
                if not isinstance(weights, dict) or not weights:
                    self.error(f"{spath}.kinds", "expected a non-empty object of kind weights")
                else:
                    for k, w in weights.items():
                        if k not in kinds:
                            self.error(f"{spath}.kinds.{k}", f"operation kind {k!r} is not registered")
                        if self.number(w, f"{spath}.kinds.{k}") is not None and w <= 0:
                            self.error(f"{spath}.kinds.{k}", "weight must be positive")
                        pairs.append((k, w))
                targets = self.names(sp.get("targets", []), f"{spath}.targets")
                for t in targets:
                    if t not in ids:
                        self.error(f"{spath}.targets", f"unknown component {t!r}")
                if mit is not None:
                    sporadic = SporadicBlock(mit, tuple(pairs), targets)
        if horizon is None:
            return None
        return SimulationBlock(horizon, seed, cap, mode, tuple(requests), sporadic)

    def scenario(self, doc) -> Optional[Scenario]:
        top = ("metadata", "components")
        if not self.fields(doc, "", top, ("bindings", "operations", "mgmt", "simulation")):
            if not isinstance(doc, dict):
                return None
        meta = doc.get("metadata", {})
        name, unit = "", "tick"
        if self.fields(meta, "metadata", ("name",), ("tick_unit",)):
            name = self.string(meta["name"], "metadata.name") or ""
            unit = meta.get("tick_unit", "tick")
            self.string(unit, "metadata.tick_unit")

        comps = []
        raw = doc.get("components", [])
        if not isinstance(raw, list):
            self.error("components", "expected a list")
            raw = []
        seen = {}
        for i, c in enumerate(raw):
            comp = self.component(c, f"components[{i}]")
            if comp is None:
                continue
            if comp.id in seen:
                self.error(f"components[{i}].id", f"duplicate component id {comp.id}")
                continue
            seen[comp.id] = comp
            comps.append(comp)

        binds = self.bindings(doc.get("bindings", []), "bindings")
        for i, v in enumerate(validate_taskset(TaskSet(tuple(comps), binds))):
            if v.kind in ("dangling_binding", "duplicate_port_binding"):
                self.error("bindings", v.message)

        ops = []
        raw = doc.get("operations", [])
        if not isinstance(raw, list):
            self.error("operations", "expected a list")
            raw = []
        for i, o in enumerate(raw):
            p = f"operations[{i}]"
            if not self.fields(o, p, ("kind", "wcet")):
                continue
            kind = self.string(o["kind"], f"{p}.kind")
            wcet = self.integer(o["wcet"], f"{p}.wcet", 1)
            if kind is None or wcet is None:
                continue
            if any(op.kind == kind for op in ops):
                self.error(f"{p}.kind", f"duplicate operation kind {kind}")
                continue
            ops.append(ManagementOpSpec(kind, wcet))
        kinds = {op.kind for op in ops}

        mgmt = MgmtSizing()
        if "mgmt" in doc:
            mgmt = self.mgmt(doc["mgmt"], "mgmt")
        elif ops:
            self.error("", "missing field 'mgmt' (required when operations are registered)")
        if mgmt.utilization is not None and not ops:
            self.error("mgmt.utilization", "utilization sizing needs at least one registered operation")

        sim = None
        if "simulation" in doc:
            sim = self.simulation(doc["simulation"], "simulation", kinds, set(seen))

        if self.diags:
            return None
        sc = Scenario(name, unit, tuple(comps), binds, tuple(ops), mgmt, sim)
        if sc.mgmt.period is None and (sc.mgmt.utilization is not None or sc.mgmt.window is not None):
            if sc.mgmt_period() < sc.registry().cmanag:
                self.error("mgmt", f"derived period {sc.mgmt_period()} is shorter than the "
                                   f"management cost {sc.registry().cmanag}")
        elif sc.mgmt.period is not None and sc.mgmt.period < sc.registry().cmanag:
            self.error("mgmt.period", f"period {sc.mgmt.period} is shorter than the "
                                      f"management cost {sc.registry().cmanag}")
        return None if self.diags else sc


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario; raises :class:`ScenarioError` with diagnostics."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([Diagnostic("", f"syntax error: {exc.msg}", exc.lineno, exc.colno)])
    parser = _Parser()
    sc = parser.scenario(doc)
    if sc is not None:
        return sc
    positions = _index_positions(text)
    located = []
    for d in parser.diags:
        path = d.path
        while path not in positions and path:
            path = path.rsplit(".", 1)[0] if "." in path else ""
        line, col = _line_col(text, positions.get(path, 0))
        located.append(Diagnostic(d.path, d.message, line, col))
    raise ScenarioError(located)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


# -- serialization -----------------------------------------------------------------


def _component_doc(c: Component) -> dict:
    doc = {"id": c.id, "wcet": c.wcet, "period": c.period, "deadline": c.deadline}
    if c.provided_ports:
        doc["provides"] = sorted(c.provided_ports)
    if c.required_ports:
        doc["requires"] = sorted(c.required_ports)
    return doc


def _binding_doc(b: Binding) -> dict:
    return {"client": b.client, "client_port": b.client_port,
            "server": b.server, "server_port": b.server_port}


def _payload_doc(p) -> dict:
    if isinstance(p, AddPayload):
        doc = {"component": _component_doc(p.component)}
        if p.bindings:
            doc["bindings"] = [_binding_doc(b) for b in p.bindings]
        return doc
    if isinstance(p, RemovePayload):
        return {"target": p.target}
    if isinstance(p, ModifyParamsPayload):
        return {"target": p.target, "wcet": p.wcet, "period": p.period, "deadline": p.deadline}
    if isinstance(p, RebindPayload):
        doc = {}
        if p.remove:
            doc["remove"] = [_binding_doc(b) for b in p.remove]
        if p.add:
            doc["add"] = [_binding_doc(b) for b in p.add]
        return doc
    if isinstance(p, ReplacePayload):
        return {"component": _component_doc(p.component)}
    raise TypeError(p)


def scenario_to_dict(sc: Scenario) -> dict:
    doc = {"metadata": {"name": sc.name, "tick_unit": sc.tick_unit},
           "components": [_component_doc(c) for c in sc.components]}
    if sc.bindings:
        doc["bindings"] = [_binding_doc(b) for b in sc.bindings]
    if sc.operations:
        doc["operations"] = [{"kind": o.kind, "wcet": o.wcet} for o in sc.operations]
    m = sc.mgmt
    mgmt = {k: getattr(m, k) for k in ("period", "utilization", "window", "count", "snap")
            if getattr(m, k) is not None}
    if mgmt:
        doc["mgmt"] = mgmt
    if sc.simulation is not None:
        s = sc.simulation
        sim = {"horizon": s.horizon}
        for key in ("seed", "queue_capacity", "priority_mode"):
            if getattr(s, key) is not None:
                sim[key] = getattr(s, key)
        if s.requests:
            reqs = []
            for r in s.requests:
                rd = {"time": r.time, "id": r.id, "kind": r.kind}
                if r.action is not None:
                    rd["action"] = r.action
                rd["payload"] = _payload_doc(r.payload)
                reqs.append(rd)
            sim["requests"] = reqs
        if s.sporadic is not None:
            sp = {"mit": s.sporadic.mit, "kinds": dict(s.sporadic.kinds)}
            if s.sporadic.targets:
                sp["targets"] = list(s.sporadic.targets)
            sim["sporadic"] = sp
        doc["simulation"] = sim
    return doc


def serialize_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2) + "\n"
