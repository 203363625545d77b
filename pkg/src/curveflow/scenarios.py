"""Builtin scenarios, problem assembly and the run orchestrator."""

from __future__ import annotations

import copy
import logging
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import io as cio
from .config import ScenarioConfig, resolve_config
from .errors import SOLVER_ERRORS, ValidationError
from .kernels import FlowParams
from .redistribution import RedistributionConfig
from .solver import EmbeddedFlow, EvolveResult, ImmersedFlow, SolverConfig, evolve
from .surfaces import BumpSurfaceParams, TorusParams, make_implicit, make_parametric, bump_surface
from .surfaces import torus_parametric

log = logging.getLogger(__name__)

OUTPUT_ENV = "CURVEFLOW_OUTPUT_DIR"

BUILTIN_SCENARIOS: dict[str, dict] = {
    "torus_knot_2_3": {
        "description": "(2,3) torus knot on the r=1, R=4 torus shrinking to a stationary curve",
        "surface": {"name": "torus", "params": {"r": 1.0, "R": 4.0}},
        "formulation": "embedded",
        "initial_curve": {"type": "torus_knot", "k": 2, "l": 3},
        "solver": {"M": 200, "t_end": 22.5, "stationary_eps": 0.0},
        "output": {"snapshot_dt": 2.5},
    },
    "torus_attract_3_5": {
        "description": "(3,5) knot sampled on an inflated r=2 torus, attracted to the r=1 torus",
        "surface": {"name": "torus", "params": {"r": 1.0, "R": 4.0}},
        "formulation": "embedded",
        "initial_curve": {"type": "torus_knot", "k": 3, "l": 5, "r_sample": 2.0, "R_sample": 4.0},
        "flow": {"stabilizer_gain": 1.0},
        "solver": {"M": 200, "t_end": 19.75, "stationary_eps": 0.0},
        "output": {"snapshot_dt": 0.25},
    },
    "klein_knot_1_4": {
        "description": "(1,4) parameter line on the immersed Klein bottle (smoke test)",
        "surface": {"name": "klein"},
        "formulation": "immersed",
        "initial_curve": {"type": "parameter_line", "k": 1, "l": 4},
        "redistribution": {"omega": 100.0},
        "solver": {"M": 200, "t_end": 1.0, "stationary_eps": 0.0},
        "output": {"snapshot_dt": 0.25},
    },
    "bump_surface_ellipse": {
        "description": "ellipse X1^2/2 + X2^2 = 2 projected onto the flattened sphere with two bumps",
        "surface": {"name": "bump_sphere", "params": {"r": 2.5, "c": 4.0, "v": 3.0}},
        "formulation": "embedded",
        "initial_curve": {"type": "projected_ellipse", "a": 2.0, "b": 2.0 ** 0.5},
        "flow": {"stabilizer_gain": 1.0},
        "solver": {"M": 200, "t_end": 13.5, "stationary_eps": 0.0},
        "output": {"snapshot_dt": 1.5},
    },
    "sphere_latitude": {
        "description": "latitude circle at polar angle 80 degrees on the unit sphere (oracle)",
        "surface": {"name": "sphere", "params": {"R": 1.0}},
        "formulation": "embedded",
        "initial_curve": {"type": "latitude_circle", "theta0": 80.0},
        "solver": {"M": 200, "t_end": 1.6, "stationary_eps": 0.0},
        "output": {"snapshot_dt": 0.1},
    },
    "great_circle": {
        "description": "equator of the unit sphere, a stationary geodesic (oracle)",
        "surface": {"name": "sphere", "params": {"R": 1.0}},
        "formulation": "embedded",
        "initial_curve": {"type": "latitude_circle", "theta0": 90.0},
        "solver": {"M": 200, "t_end": 1.0, "stationary_eps": 0.0},
        "output": {"snapshot_dt": 0.25},
    },
}


def builtin_config(name: str) -> ScenarioConfig:
    if name not in BUILTIN_SCENARIOS:
        raise ValidationError(f"unknown scenario {name!r}; available: "
                              f"{', '.join(sorted(BUILTIN_SCENARIOS))}", field="name")
    raw = copy.deepcopy(BUILTIN_SCENARIOS[name])
    raw["name"] = name
    return resolve_config(raw)


def builtin_raw(name: str) -> dict:
    raw = copy.deepcopy(BUILTIN_SCENARIOS[name])
    raw["name"] = name
    return raw


# ---------------------------------------------------------------------------
# assembly

def initial_curve(cfg: ScenarioConfig) -> tuple[np.ndarray, tuple[int, int] | None]:
    """Initial nodes (``(M, 3)`` embedded or ``(M, 2)`` lifted parameters) and winding."""
    M = cfg.solver["M"]
    u = np.arange(M) / M
    c = cfg.initial_curve
    sname, sp = cfg.surface["name"], cfg.surface["params"]
    immersed = cfg.formulation == "immersed"
    ctype = c["type"]

    if ctype == "torus_knot":
        Y = np.stack([c["k"] * u, c["l"] * u], axis=-1)
        if immersed:
            return Y, (c["k"], c["l"])
        return torus_parametric(TorusParams(c["r_sample"], c["R_sample"])).chi(Y), None
    if ctype == "parameter_line":
        Y = np.stack([c["u0"] + c["k"] * u, c["v0"] + c["l"] * u], axis=-1)
        if immersed:
            return Y, (c["k"], c["l"])
        return make_parametric(sname, sp).chi(Y), None
    if ctype == "latitude_circle":
        th = np.radians(c["theta0"])
        R = sp["R"]
        if immersed:
            Y = np.stack([u, np.full(M, (90.0 - c["theta0"]) / 360.0)], axis=-1)
            return Y, (1, 0)
        ang = 2.0 * np.pi * u
        X = R * np.stack([np.sin(th) * np.cos(ang), np.sin(th) * np.sin(ang),
                          np.full(M, np.cos(th))], axis=-1)
        return X, None
    if ctype == "projected_ellipse":
        ang = 2.0 * np.pi * u
        x, y = c["a"] * np.cos(ang), c["b"] * np.sin(ang)
        if sname == "bump_sphere":
            surf = bump_surface(BumpSurfaceParams(**sp))
            base = np.sqrt(sp["r"] ** 2 - x * x - y * y) / sp["c"]
            z = base + surf.aux["phi"](np.stack([x, y, np.zeros(M)], axis=-1))
        else:
            z = np.sqrt(sp["R"] ** 2 - x * x - y * y)
        return np.stack([x, y, z], axis=-1), None
    if ctype == "explicit":
        nodes = np.array(c["nodes"], dtype=float)
        wind = tuple(c["winding"]) if immersed else None
        return nodes, wind
    raise ValidationError(f"unsupported initial curve {ctype!r}", field="initial_curve.type")


def flow_params(cfg: ScenarioConfig) -> FlowParams:
    return FlowParams(a=cfg.flow["a_const"], stabilizer_gain=cfg.flow["stabilizer_gain"])


def redistribution(cfg: ScenarioConfig) -> RedistributionConfig:
    return RedistributionConfig(omega=cfg.redistribution["omega"],
                                enabled=cfg.redistribution["enabled"])


def solver_config(cfg: ScenarioConfig) -> SolverConfig:
    s = cfg.solver
    return SolverConfig(M=s["M"], delta=s["delta"], rk_tol=s["rk_tol"], dt_init=s["dt_init"],
                        t_end=s["t_end"], snapshot_dt=cfg.snapshot_dt,
                        stationary_eps=s["stationary_eps"],
                        stationary_steps=s["stationary_steps"], min_dt=s["min_dt"],
                        max_steps=s["max_steps"], stability_cap=s["stability_cap"])


def build_problem(cfg: ScenarioConfig):
    """Right-hand side object for the configured formulation."""
    delta = cfg.solver["delta"]
    if cfg.formulation == "embedded":
        surf = make_implicit(cfg.surface["name"], cfg.surface["params"])
        return EmbeddedFlow(surf, flow_params(cfg), redistribution(cfg), delta)
    surf = make_parametric(cfg.surface["name"], cfg.surface["params"])
    _, winding = initial_curve(cfg) if cfg.initial_curve["type"] == "explicit" else (None, None)
    if winding is None:
        c = cfg.initial_curve
        winding = (1, 0) if c["type"] == "latitude_circle" else (c["k"], c["l"])
    return ImmersedFlow(surf, tuple(winding), flow_params(cfg), redistribution(cfg), delta)


# ---------------------------------------------------------------------------
# orchestration

@dataclass
class RunArtifacts:
    directory: Path
    snapshots: list[Path] = field(default_factory=list)
    series: Path | None = None
    metadata: Path | None = None
    mesh: Path | None = None
    status: str = "ok"
    error: dict | None = None
    result: EvolveResult | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def output_directory(cfg: ScenarioConfig, override=None) -> Path:
    """Run directory: explicit override, then ``$CURVEFLOW_OUTPUT_DIR/<name>``,
    then ``output.directory``, then ``runs/<name>``."""
    if override is not None:
        return Path(override)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env) / cfg.name
    if cfg.output["directory"]:
        return Path(cfg.output["directory"])
    return Path("runs") / cfg.name


def build_info() -> dict:
    return {"package": "curveflow", "version": __version__, "numpy": np.__version__,
            "python": platform.python_version()}


def series_columns(cfg: ScenarioConfig) -> tuple[str, ...]:
    cols = cio.SERIES_COLUMNS
    if cfg.formulation == "immersed":
        cols = cols + cio.IMMERSED_COLUMNS
    return cols


def run_scenario(cfg: ScenarioConfig, out_dir=None,
                 progress: Callable | None = None) -> RunArtifacts:
    """Integrate the scenario and write snapshots, series, metadata and meshes.

    Solver failures do not raise: the partial series is written and the
    metadata carries ``status: "error"`` with a machine-readable record.
    """
    directory = output_directory(cfg, out_dir)
    snap_dir = directory / "snapshots"
    directory.mkdir(parents=True, exist_ok=True)
    for old in snap_dir.glob("snap_*"):
        old.unlink()
    art = RunArtifacts(directory=directory)

    y0, winding = initial_curve(cfg)
    problem = build_problem(cfg)
    scfg = solver_config(cfg)
    formats = cfg.output["formats"]
    snap_times: list[float] = []

    def sink(index: int, t: float, y: np.ndarray):
        art.snapshots.append(cio.write_snapshot(snap_dir / f"snap_{index:04d}.csv", y))
        if "obj" in formats:
            cio.write_polyline_obj(snap_dir / f"snap_{index:04d}.obj", problem.points(y))
        snap_times.append(t)

    try:
        result = evolve(y0, problem, scfg, sink=sink, winding=winding, progress=progress)
    except SOLVER_ERRORS as exc:
        result = getattr(exc, "partial", None)
        art.status = "error"
        art.error = {"type": type(exc).__name__, "message": str(exc),
                     "t": getattr(exc, "t", None), "index": getattr(exc, "index", None),
                     "dt": getattr(exc, "dt", None)}
        log.error("%s: %s", type(exc).__name__, exc)
    art.result = result

    cols = series_columns(cfg)
    rows = result.series if result is not None else []
    art.series = cio.write_series(directory / "series.csv", rows, cols)

    if cfg.output["mesh"]:
        surf = None
        try:
            surf = make_parametric(cfg.surface["name"], cfg.surface["params"])
        except KeyError:
            log.info("surface %s has no parametrisation; mesh skipped", cfg.surface["name"])
        if surf is not None:
            verts, faces = surf.grid(cfg.output["mesh_resolution"])
            art.mesh = cio.write_surface_obj(directory / "surface.obj", verts, faces)

    meta = {
        "config": cfg.to_dict(),
        "build": build_info(),
        "status": art.status,
        "error": art.error,
        "series_file": "series.csv",
        "series_columns": list(cols),
        "snapshots": [{"index": i, "t": t, "file": f"snapshots/snap_{i:04d}.csv"}
                      for i, t in enumerate(snap_times)],
        "winding": list(winding) if winding is not None else None,
    }
    if result is not None:
        st = result.state
        meta["result"] = {"t_final": st.t, "accepted": st.accepted, "rejected": st.rejected,
                          "rhs_evaluations": st.n_rhs, "stationary": result.stationary,
                          "max_alpha_residual": result.max_alpha_residual,
                          "snapshot_count": len(snap_times)}
    art.metadata = cio.write_json(directory / "metadata.json", meta)
    return art
