"""JSON scenario files: schema, validation, normalisation and object construction.

Node and area indices are 1-based in files and 0-based in memory.
Scalar gains and area constants broadcast to per-area arrays on parse, and
serialisation always writes the broadcast arrays, so
``parse(serialize(cfg)) == cfg``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import jsonschema

from .netgraph import GraphError, GraphKind, WeightedGraph
from .plant import Config, ControllerGains, PlantError, PlantParams
from .plant import DEFAULT_CAPACITANCE, DEFAULT_INERTIA
from .sim import Event, Scenario, SimMode

SCHEMA_VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}


def _per_area(item):
    return {"oneOf": [item, {"type": "array", "items": item, "minItems": 1}]}


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["grid", "gains", "controller"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["nodes", "lines"],
            "properties": {
                "nodes": {"type": "integer", "minimum": 1, "maximum": 64},
                "lines": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["i", "j", "r"],
                        "properties": {
                            "i": {"type": "integer", "minimum": 1},
                            "j": {"type": "integer", "minimum": 1},
                            "r": _pos,
                            "l": _pos,
                            "c": _nonneg,
                        },
                    },
                },
            },
        },
        "comm": {
            "type": "object",
            "additionalProperties": False,
            "required": ["edges"],
            "properties": {
                "edges": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["i", "j"],
                        "properties": {
                            "i": {"type": "integer", "minimum": 1},
                            "j": {"type": "integer", "minimum": 1},
                            "weight": _pos,
                        },
                    },
                },
            },
        },
        "areas": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "m": _per_area(_pos),
                "cap": _per_area(_pos),
                "p_nom": _per_area(_num),
                "v_ref": _per_area(_pos),
                "v_nom": _pos,
                "omega_ref": _num,
            },
        },
        "gains": {
            "type": "object",
            "additionalProperties": False,
            "required": ["k_omega", "k_v", "k_droop"],
            "properties": {
                "k_omega": _per_area(_pos),
                "k_v": _per_area(_pos),
                "k_droop": _per_area(_pos),
                "k_droop_i": _per_area(_pos),
                "gamma": _nonneg,
                "delta": _pos,
            },
        },
        "controller": {"enum": [c.value for c in Config]},
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": _pos,
                "t_end": _nonneg,
                "mode": {"enum": [m.value for m in SimMode]},
                "substeps": {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "null"}]},
                "record_every": {"type": "integer", "minimum": 1},
            },
        },
        "events": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["t", "area", "dp_m"],
                "properties": {"t": _nonneg, "area": {"type": "integer", "minimum": 1}, "dp_m": _num},
            },
        },
    },
}


class ScenarioError(ValueError):
    """Invalid scenario input; ``where`` names the offending field."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass(frozen=True)
class Line:
    i: int
    j: int
    r: float
    l: float | None = None  # noqa: E741
    c: float | None = None


@dataclass(frozen=True)
class CommEdge:
    i: int
    j: int
    weight: float = 1.0


@dataclass(frozen=True)
class EventSpec:
    t: float
    area: int
    dp_m: float


@dataclass(frozen=True)
class ScenarioConfig:
    nodes: int
    lines: tuple[Line, ...]
    controller: str
    k_omega: tuple[float, ...]
    k_v: tuple[float, ...]
    k_droop: tuple[float, ...]
    k_droop_i: tuple[float, ...]
    gamma: float = 0.0
    delta: float = 5.0
    comm: tuple[CommEdge, ...] | None = None
    m: tuple[float, ...] = ()
    cap: tuple[float, ...] = ()
    p_nom: tuple[float, ...] = ()
    v_ref: tuple[float, ...] = ()
    v_nom: float = 1.0
    omega_ref: float = 1.0
    dt: float = 1e-4
    t_end: float = 35.0
    mode: str = SimMode.LINEAR.value
    substeps: int | None = None
    record_every: int = 1
    events: tuple[EventSpec, ...] = ()

    def to_dict(self) -> dict:
        def opt(line):
            d = {"i": line.i, "j": line.j, "r": line.r}
            if line.l is not None:
                d["l"] = line.l
            if line.c is not None:
                d["c"] = line.c
            return d

        out = {
            "schema": SCHEMA_VERSION,
            "grid": {"nodes": self.nodes, "lines": [opt(ln) for ln in self.lines]},
        }
        if self.comm is not None:
            out["comm"] = {"edges": [{"i": e.i, "j": e.j, "weight": e.weight} for e in self.comm]}
        out["areas"] = {
            "m": list(self.m), "cap": list(self.cap), "p_nom": list(self.p_nom), "v_ref": list(self.v_ref),
            "v_nom": self.v_nom, "omega_ref": self.omega_ref,
        }
        out["gains"] = {
            "k_omega": list(self.k_omega), "k_v": list(self.k_v), "k_droop": list(self.k_droop),
            "k_droop_i": list(self.k_droop_i), "gamma": self.gamma, "delta": self.delta,
        }
        out["controller"] = self.controller
        out["sim"] = {"dt": self.dt, "t_end": self.t_end, "mode": self.mode,
                      "substeps": self.substeps, "record_every": self.record_every}
        out["events"] = [{"t": e.t, "area": e.area, "dp_m": e.dp_m} for e in self.events]
        return out

    def replace(self, **kw) -> ScenarioConfig:
        return replace(self, **kw)


def _path(err) -> str:
    out = ""
    for part in err.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


def _schema_message(err) -> str:
    if err.validator in ("oneOf", "anyOf") and err.context:
        # report the branch matching the value's shape, not the type mismatch of the other one
        branch = [e for e in err.context if e.validator != "type"]
        return _schema_message(jsonschema.exceptions.best_match(branch or err.context))
    if err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        what = "section" if not err.absolute_path else "field"
        return f"missing required {what} {', '.join(repr(k) for k in missing)}"
    if err.validator == "additionalProperties":
        return f"unknown key(s): {err.message.split('(')[-1].rstrip(')')}"
    return err.message


def validate_document(doc) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        raise ScenarioError(_schema_message(err), _path(err) or "<root>")


def _broadcast(val, n, where) -> tuple[float, ...]:
    if isinstance(val, list):
        if len(val) != n:
            raise ScenarioError(f"expected {n} entries, got {len(val)}", where)
        return tuple(float(v) for v in val)
    return (float(val),) * n


def from_dict(doc) -> ScenarioConfig:
    """Validate a decoded scenario document and normalise it."""
    validate_document(doc)
    grid = doc["grid"]
    n = grid["nodes"]
    lines = []
    for k, ln in enumerate(grid["lines"]):
        for key in ("i", "j"):
            if ln[key] > n:
                raise ScenarioError(f"node {ln[key]} outside 1..{n}", f"grid.lines[{k}].{key}")
        lines.append(Line(ln["i"], ln["j"], float(ln["r"]),
                          None if "l" not in ln else float(ln["l"]),
                          None if "c" not in ln else float(ln["c"])))
    comm = None
    if "comm" in doc:
        comm = []
        for k, e in enumerate(doc["comm"]["edges"]):
            for key in ("i", "j"):
                if e[key] > n:
                    raise ScenarioError(f"node {e[key]} outside 1..{n}", f"comm.edges[{k}].{key}")
            comm.append(CommEdge(e["i"], e["j"], float(e.get("weight", 1.0))))
        comm = tuple(comm)
    areas = doc.get("areas", {})
    gains = doc["gains"]
    sim = doc.get("sim", {})
    events = []
    for k, e in enumerate(doc.get("events", [])):
        if e["area"] > n:
            raise ScenarioError(f"area {e['area']} outside 1..{n}", f"events[{k}].area")
        events.append(EventSpec(float(e["t"]), e["area"], float(e["dp_m"])))
    cfg = ScenarioConfig(
        nodes=n,
        lines=tuple(lines),
        controller=doc["controller"],
        k_omega=_broadcast(gains["k_omega"], n, "gains.k_omega"),
        k_v=_broadcast(gains["k_v"], n, "gains.k_v"),
        k_droop=_broadcast(gains["k_droop"], n, "gains.k_droop"),
        k_droop_i=_broadcast(gains.get("k_droop_i", 1.0), n, "gains.k_droop_i"),
        gamma=float(gains.get("gamma", 0.0)),
        delta=float(gains.get("delta", 5.0)),
        comm=comm,
        m=_broadcast(areas.get("m", DEFAULT_INERTIA), n, "areas.m"),
        cap=_broadcast(areas.get("cap", DEFAULT_CAPACITANCE), n, "areas.cap"),
        p_nom=_broadcast(areas.get("p_nom", 0.0), n, "areas.p_nom"),
        v_ref=_broadcast(areas.get("v_ref", 1.0), n, "areas.v_ref"),
        v_nom=float(areas.get("v_nom", 1.0)),
        omega_ref=float(areas.get("omega_ref", 1.0)),
        dt=float(sim.get("dt", 1e-4)),
        t_end=float(sim.get("t_end", 35.0)),
        mode=sim.get("mode", SimMode.LINEAR.value),
        substeps=sim.get("substeps"),
        record_every=int(sim.get("record_every", 1)),
        events=tuple(events),
    )
    build(cfg)
    return cfg


def parse(text: str) -> ScenarioConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", f"line {exc.lineno}, column {exc.colno}") from exc
    return from_dict(doc)


def load(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def serialize(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2) + "\n"


def build(cfg: ScenarioConfig) -> Scenario:
    """Turn a normalised config into validated model objects."""
    n = cfg.nodes
    try:
        dc = WeightedGraph.from_resistances(n, [(ln.i, ln.j, ln.r) for ln in cfg.lines])
    except GraphError as exc:
        raise ScenarioError(str(exc), "grid.lines") from exc
    comm = None
    if cfg.comm is not None:
        try:
            comm = WeightedGraph.from_edges(n, [(e.i, e.j, e.weight) for e in cfg.comm], GraphKind.COMM)
        except GraphError as exc:
            raise ScenarioError(str(exc), "comm.edges") from exc
    config = Config(cfg.controller)
    if config is Config.SECONDARY_DISTRIBUTED and comm is None:
        raise ScenarioError("secondary-distributed control needs a 'comm' section", "comm")
    try:
        params = PlantParams(n, m=cfg.m, cap=cfg.cap, v_nom=cfg.v_nom, v_ref=cfg.v_ref,
                             omega_ref=cfg.omega_ref, p_nom=cfg.p_nom)
    except PlantError as exc:
        raise ScenarioError(str(exc), "areas") from exc
    try:
        gains = ControllerGains(n, cfg.k_omega, cfg.k_v, cfg.k_droop, cfg.k_droop_i, cfg.gamma, cfg.delta)
    except PlantError as exc:
        raise ScenarioError(str(exc), "gains") from exc
    mode = SimMode(cfg.mode)
    line_l = line_c = None
    if mode is SimMode.RL_LINES:
        if any(ln.l is None for ln in cfg.lines):
            raise ScenarioError("rl-lines mode needs an inductance 'l' on every line", "grid.lines")
    if all(ln.l is not None for ln in cfg.lines):
        line_l = tuple(_edge_order(dc, cfg.lines, "l"))
    if all(ln.c is not None for ln in cfg.lines):
        line_c = tuple(_edge_order(dc, cfg.lines, "c"))
    events = tuple(Event(e.t, e.area - 1, e.dp_m) for e in cfg.events)
    try:
        return Scenario(params, gains, dc, config, comm, events, cfg.t_end, cfg.dt, mode,
                        substeps=cfg.substeps, record_every=cfg.record_every, line_l=line_l, line_c=line_c)
    except ValueError as exc:
        where = "events" if "event" in str(exc) else "sim"
        raise ScenarioError(str(exc), where) from exc


def _edge_order(dc: WeightedGraph, lines, attr):
    by_pair = {(min(ln.i, ln.j) - 1, max(ln.i, ln.j) - 1): getattr(ln, attr) for ln in lines}
    return [by_pair[(i, j)] for i, j, _ in dc.edges]
