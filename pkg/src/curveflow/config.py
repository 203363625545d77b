"""Scenario configuration: YAML parsing, defaults, validation and serialisation.

A configuration is a nested mapping with the sections ``surface``,
``formulation``, ``initial_curve``, ``flow``, ``redistribution``, ``solver`` and
``output``. :func:`parse_config` applies defaults and validates; the resolved
config serialises back to YAML (or JSON inside run metadata) and reparses to an
identical object.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Any

import yaml

from .errors import ParseError, ValidationError
from .surfaces import IMPLICIT_CATALOG, PARAMETRIC_CATALOG, SURFACE_DEFAULTS

FORMULATIONS = ("embedded", "immersed")
CURVE_TYPES = ("torus_knot", "parameter_line", "latitude_circle", "projected_ellipse", "explicit")
OUTPUT_FORMATS = ("csv", "obj")

CURVE_DEFAULTS: dict[str, dict[str, Any]] = {
    "torus_knot": {"k": 2, "l": 3, "r_sample": None, "R_sample": None},
    "parameter_line": {"k": 1, "l": 0, "u0": 0.0, "v0": 0.0},
    "latitude_circle": {"theta0": 80.0},
    "projected_ellipse": {"a": 2.0, "b": math.sqrt(2.0)},
    "explicit": {"nodes": None, "winding": None},
}

SOLVER_DEFAULTS: dict[str, Any] = {
    "M": 200,
    "delta": 1e-5,
    "rk_tol": 1e-3,
    "dt_init": None,
    "t_end": 1.0,
    "stationary_eps": None,
    "stationary_steps": 10,
    "min_dt": 1e-12,
    "max_steps": 1_000_000,
    "stability_cap": 0.9,
}

FLOW_DEFAULTS = {"a_const": 1.0, "stabilizer_gain": 1.0}
REDIS_DEFAULTS = {"omega": 10.0, "enabled": True}
OUTPUT_DEFAULTS = {"directory": None, "formats": ["csv"], "snapshot_dt": None,
                   "mesh": False, "mesh_resolution": 64}

SECTIONS = ("name", "description", "surface", "formulation", "initial_curve", "flow",
            "redistribution", "solver", "output")


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved scenario. Build with :func:`parse_config` or :func:`resolve_config`."""

    name: str
    surface: dict
    formulation: str
    initial_curve: dict
    flow: dict
    redistribution: dict
    solver: dict
    output: dict
    description: str = ""
    _lines: dict = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "surface": copy.deepcopy(self.surface),
            "formulation": self.formulation,
            "initial_curve": copy.deepcopy(self.initial_curve),
            "flow": dict(self.flow),
            "redistribution": dict(self.redistribution),
            "solver": dict(self.solver),
            "output": copy.deepcopy(self.output),
        }

    @property
    def snapshot_dt(self) -> float:
        snap = self.output["snapshot_dt"]
        return float(self.solver["t_end"] if snap is None else snap)


# ---------------------------------------------------------------------------
# line bookkeeping

def _key_lines(text: str) -> dict[str, int]:
    """Map dotted key paths to 1-based source lines (best effort)."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines: dict[str, int] = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = f"{prefix}.{k.value}" if prefix else str(k.value)
                lines[key] = k.start_mark.line + 1
                walk(v, key)

    walk(root, "")
    return lines


def _fail_parse(msg: str, fld: str, lines: dict) -> ParseError:
    return ParseError(msg, line=lines.get(fld), field=fld)


# ---------------------------------------------------------------------------
# coercion helpers

def _num(value, fld, lines, allow_none=False) -> float | None:
    if value is None and allow_none:
        return None
    if isinstance(value, str):
        # YAML 1.1 reads exponent literals without a dot (``1e-6``) as strings
        try:
            value = float(value)
        except ValueError:
            raise _fail_parse(f"{fld}: expected a number, got {value!r}", fld, lines) from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail_parse(f"{fld}: expected a number, got {value!r}", fld, lines)
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{fld} must be finite", field=fld)
    return value


def _int(value, fld, lines) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise _fail_parse(f"{fld}: expected an integer, got {value!r}", fld, lines)
    return int(value)


def _bool(value, fld, lines) -> bool:
    if not isinstance(value, bool):
        raise _fail_parse(f"{fld}: expected true/false, got {value!r}", fld, lines)
    return value


def _section(raw: dict, name: str, defaults: dict, lines: dict) -> dict:
    given = raw.get(name) or {}
    if not isinstance(given, dict):
        raise _fail_parse(f"section {name!r} must be a mapping", name, lines)
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        fld = f"{name}.{unknown[0]}"
        raise _fail_parse(f"unknown field {fld!r}", fld, lines)
    out = dict(defaults)
    out.update(given)
    return out


# ---------------------------------------------------------------------------
# resolution

def _resolve_surface(raw, formulation, lines) -> dict:
    surf = raw.get("surface")
    if isinstance(surf, str):
        surf = {"name": surf}
    if not isinstance(surf, dict) or "name" not in surf:
        raise _fail_parse("surface must name a catalog entry", "surface", lines)
    name = surf["name"]
    catalog = IMPLICIT_CATALOG if formulation == "embedded" else PARAMETRIC_CATALOG
    if name not in SURFACE_DEFAULTS:
        raise ValidationError(f"unknown surface {name!r}", field="surface.name")
    if name not in catalog:
        need = "an implicit" if formulation == "embedded" else "a parametric"
        raise ValidationError(f"{formulation} formulation requires {need} surface; "
                              f"{name!r} is not available", field="surface.name")
    params = surf.get("params") or {}
    if not isinstance(params, dict):
        raise _fail_parse("surface.params must be a mapping", "surface.params", lines)
    defaults = SURFACE_DEFAULTS[name]
    unknown = sorted(set(params) - set(defaults))
    if unknown:
        fld = f"surface.params.{unknown[0]}"
        raise _fail_parse(f"unknown field {fld!r}", fld, lines)
    resolved = {k: _num(params.get(k, v), f"surface.params.{k}", lines) for k, v in defaults.items()}
    _validate_surface(name, resolved)
    return {"name": name, "params": resolved}


def _validate_surface(name: str, p: dict) -> None:
    if name == "torus" and not 0 < p["r"] < p["R"]:
        raise ValidationError(f"torus requires 0 < r < R (got r={p['r']}, R={p['R']})",
                              field="surface.params")
    if name == "sphere" and not p["R"] > 0:
        raise ValidationError("sphere requires R > 0", field="surface.params.R")
    if name == "bump_sphere":
        if not (p["r"] > 0 and p["c"] > 0 and p["v"] >= 0):
            raise ValidationError("bump_sphere requires r > 0, c > 0, v >= 0",
                                  field="surface.params")


def _resolve_curve(raw, surface, formulation, lines) -> dict:
    cur = raw.get("initial_curve")
    if not isinstance(cur, dict) or "type" not in cur:
        raise _fail_parse("initial_curve needs a 'type'", "initial_curve", lines)
    ctype = cur["type"]
    if ctype not in CURVE_TYPES:
        raise ValidationError(f"unknown initial_curve type {ctype!r}; expected one of "
                              f"{', '.join(CURVE_TYPES)}", field="initial_curve.type")
    defaults = CURVE_DEFAULTS[ctype]
    unknown = sorted(set(cur) - set(defaults) - {"type"})
    if unknown:
        fld = f"initial_curve.{unknown[0]}"
        raise _fail_parse(f"unknown field {fld!r}", fld, lines)
    out: dict[str, Any] = {"type": ctype}
    merged = dict(defaults)
    merged.update({k: v for k, v in cur.items() if k != "type"})
    sname = surface["name"]

    if ctype in ("torus_knot", "parameter_line"):
        out["k"] = _int(merged["k"], "initial_curve.k", lines)
        out["l"] = _int(merged["l"], "initial_curve.l", lines)
        if out["k"] == 0 and out["l"] == 0:
            raise ValidationError("winding (k, l) must not be (0, 0)", field="initial_curve.k")
    if ctype == "torus_knot":
        if sname != "torus":
            raise ValidationError("torus_knot initial curve requires the torus surface",
                                  field="initial_curve.type")
        r = surface["params"]["r"] if merged["r_sample"] is None else merged["r_sample"]
        R = surface["params"]["R"] if merged["R_sample"] is None else merged["R_sample"]
        out["r_sample"] = _num(r, "initial_curve.r_sample", lines)
        out["R_sample"] = _num(R, "initial_curve.R_sample", lines)
        if not 0 < out["r_sample"] < out["R_sample"]:
            raise ValidationError("torus_knot sampling requires 0 < r < R",
                                  field="initial_curve.r_sample")
        if formulation == "immersed" and (out["r_sample"], out["R_sample"]) != (
                surface["params"]["r"], surface["params"]["R"]):
            raise ValidationError("immersed curves lie on the surface; r_sample and R_sample "
                                  "must match the surface", field="initial_curve.r_sample")
    elif ctype == "parameter_line":
        out["u0"] = _num(merged["u0"], "initial_curve.u0", lines)
        out["v0"] = _num(merged["v0"], "initial_curve.v0", lines)
        if sname not in PARAMETRIC_CATALOG:
            raise ValidationError("parameter_line requires a surface with a parametrisation",
                                  field="initial_curve.type")
    elif ctype == "latitude_circle":
        if sname != "sphere":
            raise ValidationError("latitude_circle requires the sphere surface",
                                  field="initial_curve.type")
        out["theta0"] = _num(merged["theta0"], "initial_curve.theta0", lines)
        if not 0 < out["theta0"] < 180:
            raise ValidationError("latitude_circle requires 0 < theta0 < 180 (degrees)",
                                  field="initial_curve.theta0")
    elif ctype == "projected_ellipse":
        if sname not in ("bump_sphere", "sphere"):
            raise ValidationError("projected_ellipse requires bump_sphere or sphere",
                                  field="initial_curve.type")
        out["a"] = _num(merged["a"], "initial_curve.a", lines)
        out["b"] = _num(merged["b"], "initial_curve.b", lines)
        rad = surface["params"]["r"] if sname == "bump_sphere" else surface["params"]["R"]
        if not (0 < out["a"] < rad and 0 < out["b"] < rad):
            raise ValidationError("projected_ellipse semi-axes must lie in (0, surface radius)",
                                  field="initial_curve.a")
    elif ctype == "explicit":
        nodes = merged["nodes"]
        dim = 3 if formulation == "embedded" else 2
        if not isinstance(nodes, list) or len(nodes) < 3:
            raise _fail_parse("explicit initial_curve needs a list of at least 3 nodes",
                              "initial_curve.nodes", lines)
        rows = []
        for i, row in enumerate(nodes):
            if not isinstance(row, list) or len(row) != dim:
                raise _fail_parse(f"node {i} must have {dim} coordinates",
                                  "initial_curve.nodes", lines)
            rows.append([_num(v, "initial_curve.nodes", lines) for v in row])
        out["nodes"] = rows
        wind = merged["winding"]
        if formulation == "immersed":
            if not isinstance(wind, list) or len(wind) != 2:
                raise ValidationError("explicit immersed curves need winding: [k, l]",
                                      field="initial_curve.winding")
            out["winding"] = [_int(w, "initial_curve.winding", lines) for w in wind]
        else:
            if wind is not None:
                raise ValidationError("winding applies to immersed curves only",
                                      field="initial_curve.winding")
            out["winding"] = None
    return out


def _resolve_solver(raw, curve, lines) -> dict:
    s = _section(raw, "solver", SOLVER_DEFAULTS, lines)
    given = raw.get("solver") or {}
    if curve["type"] == "explicit":
        n = len(curve["nodes"])
        if "M" in given and int(given["M"]) != n:
            raise ValidationError(f"solver.M={given['M']} does not match the {n} explicit nodes",
                                  field="solver.M")
        s["M"] = n
    out = {
        "M": _int(s["M"], "solver.M", lines),
        "delta": _num(s["delta"], "solver.delta", lines),
        "rk_tol": _num(s["rk_tol"], "solver.rk_tol", lines),
        "dt_init": _num(s["dt_init"], "solver.dt_init", lines, allow_none=True),
        "t_end": _num(s["t_end"], "solver.t_end", lines),
        "stationary_eps": _num(s["stationary_eps"], "solver.stationary_eps", lines,
                               allow_none=True),
        "stationary_steps": _int(s["stationary_steps"], "solver.stationary_steps", lines),
        "min_dt": _num(s["min_dt"], "solver.min_dt", lines),
        "max_steps": _int(s["max_steps"], "solver.max_steps", lines),
        "stability_cap": _num(s["stability_cap"], "solver.stability_cap", lines),
    }
    checks = [
        ("M", out["M"] >= 3, "M >= 3"),
        ("delta", out["delta"] >= 0, "delta >= 0"),
        ("rk_tol", out["rk_tol"] > 0, "rk_tol > 0"),
        ("dt_init", out["dt_init"] is None or out["dt_init"] > 0, "dt_init > 0"),
        ("t_end", out["t_end"] > 0, "t_end > 0"),
        ("stationary_eps", out["stationary_eps"] is None or out["stationary_eps"] >= 0,
         "stationary_eps >= 0"),
        ("stationary_steps", out["stationary_steps"] >= 1, "stationary_steps >= 1"),
        ("min_dt", out["min_dt"] > 0, "min_dt > 0"),
        ("max_steps", out["max_steps"] >= 1, "max_steps >= 1"),
        ("stability_cap", out["stability_cap"] >= 0, "stability_cap >= 0"),
    ]
    for key, ok, rule in checks:
        if not ok:
            raise ValidationError(f"solver requires {rule}", field=f"solver.{key}")
    return out


def resolve_config(raw: dict, lines: dict | None = None) -> ScenarioConfig:
    """Apply defaults to a raw mapping and validate every invariant."""
    lines = lines or {}
    if not isinstance(raw, dict):
        raise ParseError("configuration must be a mapping", line=1)
    if "config" in raw and isinstance(raw["config"], dict) and "surface" not in raw:
        raw = raw["config"]  # run metadata feeds back as a config
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise _fail_parse(f"unknown section {unknown[0]!r}", unknown[0], lines)

    formulation = raw.get("formulation", "embedded")
    if formulation not in FORMULATIONS:
        raise ValidationError(f"formulation must be one of {FORMULATIONS}", field="formulation")
    surface = _resolve_surface(raw, formulation, lines)
    curve = _resolve_curve(raw, surface, formulation, lines)

    f = _section(raw, "flow", FLOW_DEFAULTS, lines)
    flow = {"a_const": _num(f["a_const"], "flow.a_const", lines),
            "stabilizer_gain": _num(f["stabilizer_gain"], "flow.stabilizer_gain", lines)}
    if not flow["a_const"] > 0:
        raise ValidationError("flow requires a_const > 0", field="flow.a_const")
    if flow["stabilizer_gain"] < 0:
        raise ValidationError("flow requires stabilizer_gain >= 0", field="flow.stabilizer_gain")

    r = _section(raw, "redistribution", REDIS_DEFAULTS, lines)
    redis = {"omega": _num(r["omega"], "redistribution.omega", lines),
             "enabled": _bool(r["enabled"], "redistribution.enabled", lines)}
    if redis["omega"] < 0:
        raise ValidationError("redistribution requires omega >= 0", field="redistribution.omega")

    solver = _resolve_solver(raw, curve, lines)

    o = _section(raw, "output", OUTPUT_DEFAULTS, lines)
    formats = o["formats"]
    if isinstance(formats, str):
        formats = [formats]
    if not isinstance(formats, list) or any(x not in OUTPUT_FORMATS for x in formats):
        raise ValidationError(f"output.formats must be a subset of {OUTPUT_FORMATS}",
                              field="output.formats")
    output = {
        "directory": None if o["directory"] is None else str(o["directory"]),
        "formats": sorted(set(formats), key=OUTPUT_FORMATS.index),
        "snapshot_dt": _num(o["snapshot_dt"], "output.snapshot_dt", lines, allow_none=True),
        "mesh": _bool(o["mesh"], "output.mesh", lines),
        "mesh_resolution": _int(o["mesh_resolution"], "output.mesh_resolution", lines),
    }
    if output["snapshot_dt"] is not None and not output["snapshot_dt"] > 0:
        raise ValidationError("output requires snapshot_dt > 0", field="output.snapshot_dt")
    if output["mesh_resolution"] < 2:
        raise ValidationError("output requires mesh_resolution >= 2",
                              field="output.mesh_resolution")

    name = raw.get("name", "scenario")
    if not isinstance(name, str) or not name or any(c in name for c in "/\\"):
        raise ValidationError("name must be a non-empty string without path separators",
                              field="name")
    description = raw.get("description", "") or ""
    return ScenarioConfig(name=name, surface=surface, formulation=formulation,
                          initial_curve=curve, flow=flow, redistribution=redis, solver=solver,
                          output=output, description=str(description), _lines=lines)


def parse_config(text: str) -> ScenarioConfig:
    """Parse YAML (or JSON) text into a resolved :class:`ScenarioConfig`.

    Raises
    ------
    ParseError
        Malformed text, wrong value types or unknown fields; carries the line.
    ValidationError
        A domain invariant is violated (for example ``0 < r < R`` on the torus).
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ParseError(f"malformed configuration: {getattr(exc, 'problem', exc)}",
                         line=line) from exc
    if raw is None:
        raise ParseError("empty configuration", line=1)
    return resolve_config(raw, _key_lines(text))


def serialize_config(cfg: ScenarioConfig) -> str:
    """YAML text that :func:`parse_config` maps back to an equal config."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def config_to_json(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``key.path=value`` overrides to a raw mapping (values parsed as YAML)."""
    raw = copy.deepcopy(raw)
    if "config" in raw and isinstance(raw["config"], dict) and "surface" not in raw:
        raw = raw["config"]
    for item in overrides:
        if "=" not in item:
            raise ParseError(f"override {item!r} is not of the form key=value", field=item)
        key, text = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ParseError(f"override {item!r} has an empty key", field=item)
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ParseError(f"override {item!r}: cannot parse value", field=key) from exc
        node = raw
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise ParseError(f"override {item!r}: {p!r} is not a section", field=key)
            node = nxt
        node[parts[-1]] = value
    return raw


def load_raw(text: str) -> dict:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"malformed configuration: {exc}",
                         line=mark.line + 1 if mark is not None else None) from exc
    if not isinstance(raw, dict):
        raise ParseError("configuration must be a mapping", line=1)
    return raw
