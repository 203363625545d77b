"""Velocity fields of the constrained flow and their analytic diagnostics.

All functions are vectorised over nodes: points ``X`` have shape ``(..., 3)``,
curvatures and speeds shape ``(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .surfaces import ImplicitSurface, ParametricSurface, left_pseudoinverse, METRIC_FLOOR

Diffusivity = Union[float, Callable[[np.ndarray, np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class FlowParams:
    """Diffusivity ``a`` and linear stabiliser ``h(phi) = -C phi``.

    ``a`` is either a positive constant or a callable ``a(X, T)`` returning
    one value per node.
    """

    a: Diffusivity = 1.0
    stabilizer_gain: float = 1.0

    def __post_init__(self):
        if self.stabilizer_gain < 0:
            raise ValueError("stabilizer_gain must be >= 0")
        if not callable(self.a) and not self.a > 0:
            raise ValueError("diffusivity a must be positive")

    def h(self, phi):
        return -self.stabilizer_gain * phi

    def diffusivity(self, X: np.ndarray, T: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if callable(self.a):
            a = np.asarray(self.a(X, T), dtype=float)
            if np.any(~(a > 0)):
                raise ValueError("diffusivity a(X, T) must be positive")
            return np.broadcast_to(a, X.shape[:-1])
        return np.full(X.shape[:-1], float(self.a))


def _dot(u, v):
    return np.einsum("...i,...i->...", u, v)


def embedded_force(surface: ImplicitSurface, params: FlowParams, X, T) -> np.ndarray:
    """Constraint force ``a (T^T H T + h(f)) / |grad f|^2 * grad f``.

    ``T`` is used as given; the solver passes unit tangents.
    """
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    surface.check_domain(X)
    g = surface.grad(X)
    H = surface.hess(X)
    quad = np.einsum("...i,...ij,...j->...", T, H, T)
    a = params.diffusivity(X, T)
    coef = a * (quad + params.h(surface.f(X))) / _dot(g, g)
    return coef[..., None] * g


def immersed_rhs_force(surface: ParametricSurface, params: FlowParams, Y, dY_ds,
                       implicit_for_F: ImplicitSurface | None = None,
                       floor: float = METRIC_FLOOR) -> np.ndarray:
    """``G = M(Y) [a dY_s^T Hess(chi) dY_s + F]`` in parameter space.

    The curvature term carries the diffusivity so that ``jac^T (a dY_ss + G)``
    is the tangential part of ``a X_ss + F``. ``F`` is zero unless an implicit
    companion is supplied; curves of the immersed formulation lie on the
    surface by construction.
    """
    Y = np.asarray(Y, dtype=float)
    dY = np.asarray(dY_ds, dtype=float)
    J = surface.jac(Y)
    Mp = left_pseudoinverse(J, floor)
    Hk = surface.hess(Y)
    T3 = np.einsum("...ij,...i->...j", J, dY)
    X = surface.chi(Y)
    a = params.diffusivity(X, T3)
    q = a[..., None] * np.einsum("...i,...kij,...j->...k", dY, Hk, dY)
    if implicit_for_F is not None:
        q = q + embedded_force(implicit_for_F, params, X, T3)
    return np.einsum("...ij,...j->...i", Mp, q)


def surface_normal_velocity(surface: ImplicitSurface, params: FlowParams, X, kappa, B,
                            T=None) -> np.ndarray:
    """Normal speed ``a kappa (grad f . B)^2 / |grad f|^2`` of an on-surface curve."""
    X = np.asarray(X, dtype=float)
    g = surface.grad(X)
    a = params.diffusivity(X, X if T is None else T)
    return a * np.asarray(kappa) * _dot(g, B) ** 2 / _dot(g, g)


def binormal_velocity(surface: ImplicitSurface, params: FlowParams, X, T, B) -> np.ndarray:
    """``v_B = F . B``. Diagnostic only."""
    T = np.asarray(T, dtype=float)
    That = T / np.linalg.norm(T, axis=-1, keepdims=True)
    return _dot(embedded_force(surface, params, X, That), B)


def geodesic_curvature(surface: ImplicitSurface, X, kappa, B) -> np.ndarray:
    """Signed geodesic curvature ``kappa (grad f . B) / |grad f|``."""
    g = surface.grad(np.asarray(X, dtype=float))
    return np.asarray(kappa) * _dot(g, B) / np.linalg.norm(g, axis=-1)


def length_decay_integrand(surface: ImplicitSurface, params: FlowParams, X, kappa, B,
                           T=None) -> np.ndarray:
    """``a kappa^2 (grad f . B)^2 / |grad f|^2`` (non-negative)."""
    return np.asarray(kappa) * surface_normal_velocity(surface, params, X, kappa, B, T)


def length_decay_rate(surface: ImplicitSurface, params: FlowParams, X, kappa, B, d,
                      T=None) -> float:
    """Estimate of ``dL/dt``: minus the dual-weighted sum of the decay integrand."""
    d = np.asarray(d, dtype=float)
    w = 0.5 * (d + np.roll(d, -1))
    return -float(np.sum(length_decay_integrand(surface, params, X, kappa, B, T) * w))
