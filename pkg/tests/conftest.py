"""Shared fixtures: cached scenario runs and the acceptance report."""

from __future__ import annotations

import numpy as np
import pytest

from curveflow.config import apply_overrides, resolve_config
from curveflow.scenarios import build_problem, builtin_raw, initial_curve, solver_config
from curveflow.solver import evolve

ACCEPTANCE_LINES: dict[int, str] = {}


def run_builtin(name: str, overrides=(), **evolve_kwargs):
    """Evolve a builtin scenario in memory; return ``(cfg, problem, result)``."""
    cfg = resolve_config(apply_overrides(builtin_raw(name), list(overrides)))
    y0, winding = initial_curve(cfg)
    problem = build_problem(cfg)
    result = evolve(y0, problem, solver_config(cfg), winding=winding, **evolve_kwargs)
    return cfg, problem, result


def series_arrays(result) -> dict[str, np.ndarray]:
    return {k: np.array([row[k] for row in result.series]) for k in result.series[0]}


@pytest.fixture(scope="session")
def knot_run():
    """The (2,3) torus knot at omega = 10 with every accepted state recorded."""
    states = []
    cfg, problem, result = run_builtin(
        "torus_knot_2_3", progress=lambda st, row: states.append((st.t, st.y.copy())))
    return {"cfg": cfg, "problem": problem, "result": result, "states": states,
            "series": series_arrays(result)}


@pytest.fixture(scope="session")
def knot_run_omega0():
    cfg, problem, result = run_builtin("torus_knot_2_3", ["redistribution.omega=0"])
    return {"cfg": cfg, "problem": problem, "result": result, "series": series_arrays(result)}


@pytest.fixture(scope="session")
def attract_run():
    cfg, problem, result = run_builtin("torus_attract_3_5")
    return {"cfg": cfg, "problem": problem, "result": result, "series": series_arrays(result)}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
