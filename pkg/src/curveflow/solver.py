"""Semidiscrete flowing finite-volume schemes and Runge-Kutta-Merson time stepping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .curve import (DEFAULT_DELTA, DiscreteCurve2, DiscreteCurve3, curvature_vectors,
                    dispersion, frenet_data, neighbours)
from .errors import DegenerateSegment, StepCollapse
from .kernels import FlowParams, embedded_force, immersed_rhs_force, length_decay_rate
from .redistribution import RedistributionConfig, alpha_discrete, dual_weights, zero_mean_residual
from .surfaces import METRIC_FLOOR, ImplicitSurface, ParametricSurface

log = logging.getLogger(__name__)

DEGENERATE_FRACTION = 1e-12
# |R(z)| <= 1 on [-3.5, 0] for the Merson stability polynomial (boundary ~ -3.53)
MERSON_REAL_BOUND = 3.5

RHS = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SolverConfig:
    M: int = 200
    delta: float = DEFAULT_DELTA
    rk_tol: float = 1e-3
    dt_init: float | None = None  # None -> 4 h^2
    t_end: float = 1.0
    snapshot_dt: float | None = None  # None -> t_end
    stationary_eps: float | None = None  # None -> 1e-6 L(0); 0 disables
    stationary_steps: int = 10
    min_dt: float = 1e-12
    max_steps: int = 1_000_000
    safety: float = 0.8
    stability_cap: float = 0.9  # fraction of the explicit diffusion limit; 0 disables

    def __post_init__(self):
        if self.M < 3:
            raise ValueError("M must be at least 3")
        if not self.rk_tol > 0:
            raise ValueError("rk_tol must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.dt_init is not None and not self.dt_init > 0:
            raise ValueError("dt_init must be positive")
        if self.snapshot_dt is not None and not self.snapshot_dt > 0:
            raise ValueError("snapshot_dt must be positive")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.stability_cap < 0:
            raise ValueError("stability_cap must be non-negative")

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def initial_dt(self) -> float:
        return self.dt_init if self.dt_init is not None else 4.0 * self.h ** 2


@dataclass
class FlowState:
    t: float
    y: np.ndarray
    dt: float
    winding: tuple[int, int] | None = None
    accepted: int = 0
    rejected: int = 0
    n_rhs: int = 0
    last_error: float = 0.0

    @property
    def curve(self):
        if self.winding is None:
            return DiscreteCurve3(self.y)
        return DiscreteCurve2(self.y, self.winding)


# ---------------------------------------------------------------------------
# right-hand sides

def _check_lengths(d: np.ndarray) -> None:
    L = float(np.sum(d))
    short = np.flatnonzero(~(d > DEGENERATE_FRACTION * L))
    if short.size:
        raise DegenerateSegment(f"segment {int(short[0])} collapsed (d={d[short[0]]:.3e})",
                                index=int(short[0]))


def diffusion_dt_limit(d: np.ndarray, a_max: float) -> float:
    """Largest stable explicit step for the curvature term.

    Gershgorin bound ``4 a / (d_k d_{k+1})`` on the spectral radius of the
    finite-volume second-difference operator, against the Merson real
    stability interval.
    """
    rho = 4.0 * a_max / float(np.min(d * np.roll(d, -1)))
    return MERSON_REAL_BOUND / rho


def _alpha(kv, d, redis: RedistributionConfig | None):
    if redis is None or not redis.enabled:
        return np.zeros_like(d)
    return alpha_discrete(None, None, d, omega=redis.omega, kv=kv)


@dataclass
class EmbeddedFlow:
    """Right-hand side of the embedded scheme for nodes ``X`` of shape ``(M, 3)``.

    Per node::

        dX_k/dt = a_k K_k + F_k + alpha_k T_k

    with ``K_k`` the finite-volume curvature vector, ``T_k`` the centred chord
    tangent and ``F_k`` the constraint force evaluated at the unit tangent.
    ``alpha`` is driven by ``kappa_k vN_k = K_k . (a_k K_k + F_k)``.
    """

    surface: ImplicitSurface
    flow: FlowParams = field(default_factory=FlowParams)
    redis: RedistributionConfig | None = field(default_factory=RedistributionConfig)
    delta: float = DEFAULT_DELTA
    n_calls: int = 0
    max_alpha_residual: float = 0.0

    def parts(self, X: np.ndarray) -> dict:
        K, T, d, _ = curvature_vectors(X)
        _check_lengths(d)
        self.surface.check_domain(X)
        That = T / np.linalg.norm(T, axis=1)[:, None]
        a = self.flow.diffusivity(X, That)
        F = embedded_force(self.surface, self.flow, X, That)
        normal = a[:, None] * K + F
        kv = np.einsum("ij,ij->i", K, normal)
        alpha = _alpha(kv, d, self.redis)
        self.max_alpha_residual = max(self.max_alpha_residual, zero_mean_residual(alpha, d))
        V = normal + alpha[:, None] * T
        return {"V": V, "K": K, "T": T, "d": d, "kv": kv, "alpha": alpha, "X": X}

    def __call__(self, t: float, X: np.ndarray) -> np.ndarray:
        self.n_calls += 1
        return self.parts(X)["V"]

    def points(self, X: np.ndarray) -> np.ndarray:
        return X

    def stable_dt(self, X: np.ndarray) -> float:
        d = np.linalg.norm(X - np.roll(X, 1, axis=0), axis=1)
        K, T, _, _ = curvature_vectors(X, d)
        a = self.flow.diffusivity(X, T)
        return diffusion_dt_limit(d, float(np.max(a)))

    def diagnostics(self, X: np.ndarray) -> dict:
        p = self.parts(X)
        d = p["d"]
        L = float(np.sum(d))
        w = dual_weights(d)
        phi = self.surface.f(X)
        fr = _frenet_from_nodes(X, self.delta)
        decay = length_decay_rate(self.surface, self.flow, X, fr.kappa, fr.B, d, fr.T)
        return {
            "L": L,
            "max_f_abs": float(np.max(np.abs(phi))),
            "phi_l2": float(np.sqrt(np.sum(phi * phi * w))),
            "mean_kv": float(np.sum(p["kv"] * w) / L),
            "dispersion": dispersion(d),
            "max_speed": float(np.max(np.linalg.norm(p["V"], axis=1))),
            "decay_rate": decay,
            "alpha_residual": zero_mean_residual(p["alpha"], d),
        }


def _frenet_from_nodes(X, delta):
    return frenet_data(DiscreteCurve3(X), delta)


@dataclass
class ImmersedFlow:
    """Right-hand side of the immersed scheme for lifted parameters ``Y`` (M, 2).

    Arclength derivatives follow the one-sided construction with
    ``q_k = |jac(Y_k)^T t_k|``, ``t_k = (Y_k - Y_{k-1}) / |Y_k - Y_{k-1}|``::

        dY_s[k]  = t_k / q_k
        dY_ss[k] = 2 / (rho_k + rho_{k+1}) / q_k * (t_{k+1}/q_{k+1} - t_k/q_k)

    where ``rho_k = |Y_k - Y_{k-1}|``. The tangential term uses 3D chord
    lengths ``d_k = |chi(Y_k) - chi(Y_{k-1})|`` so the redistribution is shared
    with the embedded scheme.
    """

    surface: ParametricSurface
    winding: tuple[int, int]
    flow: FlowParams = field(default_factory=FlowParams)
    redis: RedistributionConfig | None = field(default_factory=RedistributionConfig)
    delta: float = DEFAULT_DELTA
    implicit_for_F: ImplicitSurface | None = None
    metric_floor: float = METRIC_FLOOR
    n_calls: int = 0
    max_alpha_residual: float = 0.0

    @property
    def shift(self) -> np.ndarray:
        return np.asarray(self.winding, dtype=float)

    def parts(self, Y: np.ndarray) -> dict:
        prev, nxt = neighbours(Y, self.shift)
        dY = Y - prev
        rho = np.linalg.norm(dY, axis=1)
        if np.any(~(rho > 0)):
            k = int(np.flatnonzero(~(rho > 0))[0])
            raise DegenerateSegment(f"parameter nodes {k - 1} and {k} coincide", index=k)
        X = self.surface.chi(Y)
        K3, T3, d, d_next = curvature_vectors(X)
        _check_lengths(d)

        t = dY / rho[:, None]
        J = self.surface.jac(Y)
        q = np.linalg.norm(np.einsum("kij,ki->kj", J, t), axis=1)
        flux = t / q[:, None]
        dYs = flux
        dYss = (2.0 / (rho + np.roll(rho, -1)) / q)[:, None] * (np.roll(flux, -1, axis=0) - flux)

        Ts = np.einsum("kij,ki->kj", J, dYs)
        a = self.flow.diffusivity(X, Ts)
        G = immersed_rhs_force(self.surface, self.flow, Y, dYs, self.implicit_for_F,
                               self.metric_floor)
        normal = a[:, None] * dYss + G
        normal3 = np.einsum("kij,ki->kj", J, normal)
        kv = np.einsum("ij,ij->i", K3, normal3)
        alpha = _alpha(kv, d, self.redis)
        self.max_alpha_residual = max(self.max_alpha_residual, zero_mean_residual(alpha, d))
        tangent = (nxt - prev) / (d + d_next)[:, None]
        V = normal + alpha[:, None] * tangent
        return {"V": V, "X": X, "J": J, "d": d, "kv": kv, "alpha": alpha, "K3": K3,
                "T3": T3, "q": q}

    def __call__(self, t: float, Y: np.ndarray) -> np.ndarray:
        self.n_calls += 1
        return self.parts(Y)["V"]

    def points(self, Y: np.ndarray) -> np.ndarray:
        return self.surface.chi(Y)

    def stable_dt(self, Y: np.ndarray) -> float:
        X = self.surface.chi(Y)
        d = np.linalg.norm(X - np.roll(X, 1, axis=0), axis=1)
        a = self.flow.diffusivity(X, X - np.roll(X, 1, axis=0))
        return diffusion_dt_limit(d, float(np.max(a)))

    def velocity3(self, Y: np.ndarray) -> np.ndarray:
        """Reconstructed 3D node velocities ``jac(Y)^T dY/dt``."""
        p = self.parts(Y)
        return np.einsum("kij,ki->kj", p["J"], p["V"])

    def diagnostics(self, Y: np.ndarray) -> dict:
        p = self.parts(Y)
        d, X = p["d"], p["X"]
        L = float(np.sum(d))
        w = dual_weights(d)
        V3 = np.einsum("kij,ki->kj", p["J"], p["V"])
        implicit = self.implicit_for_F or self.surface.implicit
        if implicit is not None:
            phi = implicit.f(X)
            fr = _frenet_from_nodes(X, self.delta)
            decay = length_decay_rate(implicit, self.flow, X, fr.kappa, fr.B, d, fr.T)
        else:
            phi = np.zeros(len(d))
            decay = -float(np.sum(p["kv"] * w))
        det = self.surface.metric_det(Y)
        return {
            "L": L,
            "max_f_abs": float(np.max(np.abs(phi))),
            "phi_l2": float(np.sqrt(np.sum(phi * phi * w))),
            "mean_kv": float(np.sum(p["kv"] * w) / L),
            "dispersion": dispersion(d),
            "max_speed": float(np.max(np.linalg.norm(V3, axis=1))),
            "decay_rate": decay,
            "alpha_residual": zero_mean_residual(p["alpha"], d),
            "metric_det_min": float(np.min(det)),
            "metric_det_max": float(np.max(det)),
        }


def rhs_embedded(curve: DiscreteCurve3, surface: ImplicitSurface, flow: FlowParams = FlowParams(),
                 redis: RedistributionConfig | None = RedistributionConfig(),
                 delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Node velocities ``dX_k/dt`` of the embedded scheme, shape ``(M, 3)``."""
    nodes = curve.nodes if isinstance(curve, DiscreteCurve3) else np.asarray(curve, float)
    return EmbeddedFlow(surface, flow, redis, delta)(0.0, nodes)


def rhs_immersed(curve: DiscreteCurve2, surface: ParametricSurface, flow: FlowParams = FlowParams(),
                 redis: RedistributionConfig | None = RedistributionConfig(),
                 delta: float = DEFAULT_DELTA,
                 implicit_for_F: ImplicitSurface | None = None) -> np.ndarray:
    """Parameter velocities ``dY_k/dt`` of the immersed scheme, shape ``(M, 2)``."""
    return ImmersedFlow(surface, curve.winding, flow, redis, delta, implicit_for_F)(0.0, curve.nodes)


# ---------------------------------------------------------------------------
# Runge-Kutta-Merson

def merson_increment(rhs: RHS, t: float, y: np.ndarray, dt: float):
    """One Merson step. Returns ``(y_new, error_estimate)`` in the max norm."""
    k1 = rhs(t, y)
    k2 = rhs(t + dt / 3.0, y + dt * k1 / 3.0)
    k3 = rhs(t + dt / 3.0, y + dt * (k1 + k2) / 6.0)
    k4 = rhs(t + dt / 2.0, y + dt * (k1 + 3.0 * k3) / 8.0)
    k5 = rhs(t + dt, y + dt * (k1 - 3.0 * k3 + 4.0 * k4) / 2.0)
    y_new = y + dt * (k1 + 4.0 * k4 + k5) / 6.0
    err = dt * (2.0 * k1 - 9.0 * k3 + 8.0 * k4 - k5) / 30.0
    return y_new, float(np.max(np.abs(err)))


def _controller(dt: float, err: float, tol: float, safety: float) -> float:
    if not np.isfinite(err):
        return dt / 4.0
    if err == 0.0:
        return 4.0 * dt
    return min(max(safety * dt * (tol / err) ** 0.2, dt / 4.0), 4.0 * dt)


def rkm_step(state: FlowState, rhs: RHS, cfg: SolverConfig, t_stop: float | None = None,
             dt_max: float | None = None) -> FlowState:
    """Advance ``state`` by one accepted Merson step, retrying rejected ones.

    Steps are accepted when the max-norm error estimate is at most
    ``cfg.rk_tol``; the next step is ``0.8 dt (tol/err)^(1/5)`` clamped to
    ``[dt/4, 4 dt]`` and, when given, to ``dt_max``.

    Raises
    ------
    StepCollapse
        If the step size falls below ``cfg.min_dt``.
    """
    dt = state.dt if dt_max is None else min(state.dt, dt_max)
    rejected = state.rejected
    n_rhs = state.n_rhs
    while True:
        if dt < cfg.min_dt:
            raise StepCollapse(f"time step {dt:.3e} fell below {cfg.min_dt:.1e} at t={state.t:.6g}",
                               t=state.t, dt=dt)
        step = dt
        clipped = False
        if t_stop is not None and state.t + step >= t_stop:
            step = t_stop - state.t
            clipped = True
        try:
            y_new, err = merson_increment(rhs, state.t, state.y, step)
            n_rhs += 5
        except DegenerateSegment:
            n_rhs += 5
            rejected += 1
            dt = step / 2.0
            continue
        if np.isfinite(err) and err <= cfg.rk_tol and np.all(np.isfinite(y_new)):
            dt_next = _controller(step, err, cfg.rk_tol, cfg.safety)
            if clipped:
                dt_next = max(dt_next, dt)
            if dt_max is not None:
                dt_next = min(dt_next, dt_max)
            t_new = t_stop if clipped else state.t + step
            return FlowState(t=t_new, y=y_new, dt=dt_next, winding=state.winding,
                             accepted=state.accepted + 1, rejected=rejected, n_rhs=n_rhs,
                             last_error=err)
        rejected += 1
        dt = min(_controller(step, err, cfg.rk_tol, cfg.safety), step)


# ---------------------------------------------------------------------------
# driver

@dataclass
class EvolveResult:
    state: FlowState
    series: list[dict]
    snapshot_times: list[float]
    stationary: bool
    max_alpha_residual: float


def evolve(y0: np.ndarray, problem, cfg: SolverConfig, sink: Callable | None = None,
           winding: tuple[int, int] | None = None, progress: Callable | None = None) -> EvolveResult:
    """Integrate ``problem`` from ``t = 0`` to ``cfg.t_end`` or stationarity.

    ``sink(index, t, y)`` receives snapshots at multiples of ``snapshot_dt``.
    Solver errors are re-raised with the failing time attached and the
    partial :class:`EvolveResult` (series and snapshots so far) stored on the
    exception as ``partial``.
    """
    snap_dt = cfg.snapshot_dt if cfg.snapshot_dt is not None else cfg.t_end
    n_snaps = int(math.floor(cfg.t_end / snap_dt + 1e-9)) + 1
    snap_times = [i * snap_dt for i in range(n_snaps)]

    state = FlowState(t=0.0, y=np.array(y0, dtype=float), dt=cfg.initial_dt, winding=winding)
    series: list[dict] = []
    emitted: list[float] = []

    def record(st: FlowState, dt_taken: float) -> dict:
        row = {"t": st.t, "dt": dt_taken}
        row.update(problem.diagnostics(st.y))
        series.append(row)
        return row

    def emit(st: FlowState):
        if sink is not None:
            sink(len(emitted), st.t, st.y)
        emitted.append(st.t)

    try:
        row = record(state, 0.0)
    except Exception as exc:
        _attach_time(exc, 0.0)
        raise
    eps = cfg.stationary_eps
    if eps is None:
        eps = 1e-6 * row["L"]
    emit(state)
    next_snap = 1
    calm = 0
    stationary = False
    t_end = cfg.t_end

    while state.t < t_end and state.accepted < cfg.max_steps:
        target = snap_times[next_snap] if next_snap < n_snaps else t_end
        target = min(target, t_end)
        t_prev = state.t
        try:
            cap = None
            if cfg.stability_cap > 0 and hasattr(problem, "stable_dt"):
                cap = cfg.stability_cap * problem.stable_dt(state.y)
            state = rkm_step(state, problem, cfg, t_stop=target, dt_max=cap)
            row = record(state, state.t - t_prev)
        except Exception as exc:
            _attach_time(exc, state.t)
            exc.partial = EvolveResult(state=state, series=series, snapshot_times=emitted,
                                       stationary=False,
                                       max_alpha_residual=getattr(problem, "max_alpha_residual",
                                                                  0.0))
            raise
        if next_snap < n_snaps and abs(state.t - snap_times[next_snap]) <= 1e-12 * max(1.0, state.t):
            emit(state)
            next_snap += 1
        if progress is not None:
            progress(state, row)
        if eps > 0:
            calm = calm + 1 if row["max_speed"] < eps else 0
            if calm >= cfg.stationary_steps:
                stationary = True
                log.info("stationary at t=%.6g", state.t)
                if not emitted or emitted[-1] != state.t:
                    emit(state)
                break

    return EvolveResult(state=state, series=series, snapshot_times=emitted, stationary=stationary,
                        max_alpha_residual=getattr(problem, "max_alpha_residual", 0.0))


def _attach_time(exc: Exception, t: float) -> None:
    if hasattr(exc, "t") and getattr(exc, "t", None) is None:
        exc.t = t
