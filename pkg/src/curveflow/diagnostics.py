"""Post-run analysis of a run directory: plateau, energy identity, attraction, dispersion."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io as cio
from .errors import MissingArtifact

PLATEAU_RTOL = 1e-3
PLATEAU_FRACTION = 0.9
ENERGY_MIN_RATE = 1e-3
ENERGY_SAMPLES = 20
ATTRACTION_WINDOW = (1e-2, 1e-1)
REQUIRED_COLUMNS = ("t", "dt", "L", "max_f_abs", "phi_l2", "mean_kv", "dispersion")


@dataclass
class DiagSummary:
    t_end: float
    steps: int
    status: str
    L_initial: float
    L_final: float
    plateau_time: float | None
    plateau_reached: bool
    length_monotone: bool
    worst_length_increase: float
    energy_samples: int
    energy_max_rel_error: float | None
    energy_times: list[float] = field(default_factory=list)
    energy_rel_errors: list[float] = field(default_factory=list)
    attraction_slope: float | None = None
    attraction_points: int = 0
    dispersion_initial: float = float("nan")
    dispersion_final: float = float("nan")
    dispersion_max: float = float("nan")
    dispersion_min: float = float("nan")
    max_f_abs_max: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def plateau_time(t: np.ndarray, L: np.ndarray, rtol: float = PLATEAU_RTOL) -> float | None:
    """Earliest time after which ``L`` stays within ``rtol`` (relative) of its final value."""
    if len(L) == 0:
        return None
    dev = np.abs(L - L[-1]) / max(abs(L[-1]), np.finfo(float).tiny)
    outside = np.nonzero(dev > rtol)[0]
    if len(outside) == 0:
        return float(t[0])
    last = outside[-1]
    if last + 1 >= len(t):
        return None
    return float(t[last + 1])


def energy_identity(t: np.ndarray, L: np.ndarray, rate: np.ndarray,
                    n_samples: int = ENERGY_SAMPLES, min_rate: float = ENERGY_MIN_RATE):
    """Compare a finite-difference ``dL/dt`` with the predicted decay rate.

    Returns ``(times, relative_errors)`` at up to ``n_samples`` steps spread
    uniformly in time over the steps where ``|dL/dt| > min_rate``. A series
    whose length never moves faster than ``min_rate`` has no samples.
    """
    if len(t) < 3:
        return np.array([]), np.array([])
    dLdt = np.gradient(L, t, edge_order=2)
    ok = np.nonzero(np.abs(dLdt) > min_rate)[0]
    if len(ok) == 0:
        return np.array([]), np.array([])
    targets = np.linspace(t[ok[0]], t[ok[-1]], n_samples)
    picks = np.unique([ok[np.argmin(np.abs(t[ok] - tt))] for tt in targets])
    rel = np.abs(dLdt[picks] - rate[picks]) / np.abs(rate[picks])
    return t[picks], rel


def attraction_slope(t: np.ndarray, phi: np.ndarray, window=ATTRACTION_WINDOW):
    """Least-squares slope of ``log phi`` against ``t`` while ``phi/phi(0)`` lies in ``window``.

    Only the first passage through the window is used, so a later noise
    floor inside the window does not bias the fit.
    """
    if len(phi) == 0 or phi[0] <= 0:
        return None, 0
    ratio = phi / phi[0]
    lo, hi = window
    inside = (ratio > lo) & (ratio < hi)
    idx = np.nonzero(inside)[0]
    if len(idx) < 2:
        return None, int(len(idx))
    below = np.nonzero(ratio <= lo)[0]
    if len(below):
        idx = idx[idx < below[0]]
    if len(idx) < 2:
        return None, int(len(idx))
    slope = np.polyfit(t[idx], np.log(phi[idx]), 1)[0]
    return float(slope), int(len(idx))


def summarize(series: dict[str, np.ndarray], status: str = "ok") -> DiagSummary:
    t, L = series["t"], series["L"]
    incr = np.diff(L)
    worst = float(np.max(incr / L[:-1])) if len(incr) else 0.0
    pt = plateau_time(t, L)
    t_end = float(t[-1])
    reached = pt is not None and (pt == t[0] or pt <= PLATEAU_FRACTION * t_end)
    if "decay_rate" in series:
        et, er = energy_identity(t, L, series["decay_rate"])
    else:
        et, er = np.array([]), np.array([])
    slope, npts = attraction_slope(t, series["phi_l2"])
    disp = series["dispersion"]
    return DiagSummary(
        t_end=t_end, steps=len(t) - 1, status=status,
        L_initial=float(L[0]), L_final=float(L[-1]),
        plateau_time=pt, plateau_reached=bool(reached),
        length_monotone=bool(worst <= 1e-9), worst_length_increase=worst,
        energy_samples=len(et),
        energy_max_rel_error=float(np.max(er)) if len(er) else None,
        energy_times=[float(x) for x in et], energy_rel_errors=[float(x) for x in er],
        attraction_slope=slope, attraction_points=npts,
        dispersion_initial=float(disp[0]), dispersion_final=float(disp[-1]),
        dispersion_max=float(np.max(disp)), dispersion_min=float(np.min(disp)),
        max_f_abs_max=float(np.max(series["max_f_abs"])),
    )


def format_summary(s: DiagSummary) -> str:
    def num(x):
        return "n/a" if x is None else f"{x:.6g}"

    lines = [
        f"status: {s.status}",
        f"horizon: t = {s.t_end:.6g} after {s.steps} accepted steps",
        f"length: {s.L_initial:.10g} -> {s.L_final:.10g}",
        ("length plateau reached before t_end" if s.plateau_reached
         else "length plateau not reached before t_end") + f" (plateau time {num(s.plateau_time)})",
        f"length non-increasing: {'yes' if s.length_monotone else 'no'}"
        f" (worst relative step increase {s.worst_length_increase:.3e})",
        f"energy identity: {s.energy_samples} samples, max relative error "
        f"{num(s.energy_max_rel_error)}",
        f"attraction slope of log phi_l2: {num(s.attraction_slope)}"
        f" over {s.attraction_points} steps",
        f"dispersion: initial {s.dispersion_initial:.4g}, final {s.dispersion_final:.4g},"
        f" range [{s.dispersion_min:.4g}, {s.dispersion_max:.4g}]",
        f"max |f| over run: {s.max_f_abs_max:.4g}",
    ]
    return "\n".join(lines) + "\n"


def diag_report(run_dir, write: bool = True) -> DiagSummary:
    """Analyse ``run_dir`` and write ``plots/*.dat``, ``summary.txt`` and ``summary.json``.

    Raises
    ------
    MissingArtifact
        If the series or metadata is absent, or the series lacks a
        required column or has no rows.
    """
    run_dir = Path(run_dir)
    meta = cio.read_json(run_dir / "metadata.json")
    series = cio.read_series(run_dir / meta.get("series_file", "series.csv"))
    missing = [c for c in REQUIRED_COLUMNS if c not in series]
    if missing:
        raise MissingArtifact(f"series file lacks columns: {', '.join(missing)}")
    if len(series["t"]) == 0:
        raise MissingArtifact(f"series file has no rows: {run_dir}")
    summary = summarize(series, status=meta.get("status", "ok"))
    if write:
        plots = run_dir / "plots"
        t = series["t"]
        cio.write_columns(plots / "length.dat", {"t": t, "L": series["L"]}, "length")
        cio.write_columns(plots / "max_f_abs.dat", {"t": t, "max_f_abs": series["max_f_abs"]},
                          "distance to surface")
        cio.write_columns(plots / "dispersion.dat", {"t": t, "dispersion": series["dispersion"]},
                          "segment length dispersion")
        cio._write_text(run_dir / "summary.txt", format_summary(summary))
        cio.write_json(run_dir / "summary.json", summary.to_dict())
    return summary
