"""Implicit and parametric surface models.

Every evaluator is vectorised over leading axes: implicit maps take points of
shape ``(..., 3)``; parametric maps take parameters of shape ``(..., 2)``.
Jacobians follow the ``2 x 3`` convention ``jac[i, j] = dX_j / dY_i`` and
parametric Hessians are returned as ``(..., 3, 2, 2)`` (one symmetric 2x2
block per output component).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NearSingularMetric, OutsideRegularityDomain

TWO_PI = 2.0 * np.pi
METRIC_FLOOR = 1e-10
FD_STEP = 1e-5
FD_HESS_STEP = 1e-4
BUMP_CUTOFF = 1e-8

Array = np.ndarray


@dataclass(frozen=True, eq=False)
class ImplicitSurface:
    """Zero level set of a scalar map ``f``, with gradient and Hessian."""

    name: str
    f: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    hess: Callable[[Array], Array]
    params: dict = field(default_factory=dict)
    in_domain: Callable[[Array], Array] | None = None
    aux: dict = field(default_factory=dict)

    def check_domain(self, X: Array) -> None:
        if self.in_domain is None:
            return
        ok = np.atleast_1d(self.in_domain(np.asarray(X, dtype=float)))
        if not np.all(ok):
            k = int(np.flatnonzero(~ok.ravel())[0])
            raise OutsideRegularityDomain(
                f"{self.name}: point {k} lies outside the regularity domain", index=k)


@dataclass(frozen=True, eq=False)
class ParametricSurface:
    """Doubly 1-periodic map ``chi`` of the unit square into R^3."""

    name: str
    chi: Callable[[Array], Array]
    jac: Callable[[Array], Array]
    hess: Callable[[Array], Array]
    params: dict = field(default_factory=dict)
    implicit: ImplicitSurface | None = None

    def metric_det(self, Y: Array) -> Array:
        J = self.jac(np.asarray(Y, dtype=float))
        G = J @ np.swapaxes(J, -1, -2)
        return G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]

    def grid(self, n: int) -> tuple[Array, Array]:
        """Sample ``chi`` on an ``n x n`` periodic grid for mesh export.

        Returns ``(vertices, faces)``: vertices of shape ``(n*n, 3)`` and quad
        faces as zero-based vertex indices with periodic wrap-around.
        """
        s = np.arange(n) / n
        U, V = np.meshgrid(s, s, indexing="ij")
        verts = self.chi(np.stack([U, V], axis=-1)).reshape(-1, 3)
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        ip, jp = (i + 1) % n, (j + 1) % n
        faces = np.stack([i * n + j, ip * n + j, ip * n + jp, i * n + jp], axis=-1).reshape(-1, 4)
        return verts, faces


# ---------------------------------------------------------------------------
# parameter records

@dataclass(frozen=True)
class TorusParams:
    r: float = 1.0
    R: float = 4.0

    def __post_init__(self):
        if not (0.0 < self.r < self.R):
            raise ValueError(f"torus requires 0 < r < R (got r={self.r}, R={self.R})")


@dataclass(frozen=True)
class BumpSurfaceParams:
    r: float = 2.5
    c: float = 4.0
    v: float = 3.0

    def __post_init__(self):
        if not (self.r > 0 and self.c > 0 and self.v >= 0):
            raise ValueError("bump surface requires r > 0, c > 0, v >= 0")


# ---------------------------------------------------------------------------
# finite differences

def fd_jacobian(fun: Callable[[Array], Array], x: Array, step: float = FD_STEP) -> Array:
    """Central-difference derivative of ``fun`` at ``x`` (shape ``(..., n)``).

    Returns ``(..., n)`` for scalar maps and ``(..., n, m)`` for maps into
    R^m, with ``out[..., i, j] = d fun_j / d x_i``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2.0 * step))
    return np.stack(cols, axis=x.ndim - 1)


def fd_hessian(fun: Callable[[Array], Array], x: Array, step: float = FD_HESS_STEP,
               grad: Callable[[Array], Array] | None = None) -> Array:
    """Central-difference Hessian, symmetrised as ``(H + H^T) / 2``.

    With ``grad`` given, the Hessian is the central difference of the
    gradient (first differences, accurate to ~1e-10 at ``step=1e-5``);
    otherwise second differences of ``fun`` are used, for which a step near
    ``eps**0.25`` balances truncation and round-off.

    Output shape is ``(..., n, n)`` for scalar maps and ``(..., m, n, n)`` for
    maps into R^m.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if grad is not None:
        H = fd_jacobian(grad, x, step)
        # (..., n_i, n_j) for scalar f; gradients of vector maps are not supported here
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    f0 = np.asarray(fun(x))
    out_shape = f0.shape + (n, n)
    H = np.empty(out_shape)
    h2 = step * step
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = step
        H[..., i, i] = (np.asarray(fun(x + ei)) - 2.0 * f0 + np.asarray(fun(x - ei))) / h2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = step
            v = (np.asarray(fun(x + ei + ej)) - np.asarray(fun(x + ei - ej))
                 - np.asarray(fun(x - ei + ej)) + np.asarray(fun(x - ei - ej))) / (4.0 * h2)
            H[..., i, j] = v
            H[..., j, i] = v
    return 0.5 * (H + np.swapaxes(H, -1, -2))


# ---------------------------------------------------------------------------
# pseudoinverse

def left_pseudoinverse(J: Array, floor: float = METRIC_FLOOR) -> Array:
    """``(J J^T)^{-1} J`` for stacks of full-rank 2x3 matrices.

    The 2x2 metric is inverted in closed form.

    Raises
    ------
    NearSingularMetric
        If ``det(J J^T) <= floor`` anywhere in the stack.
    """
    J = np.asarray(J, dtype=float)
    G = J @ np.swapaxes(J, -1, -2)
    a, b, c = G[..., 0, 0], G[..., 0, 1], G[..., 1, 1]
    det = a * c - b * G[..., 1, 0]
    bad = ~(det > floor)
    if np.any(bad):
        k = int(np.flatnonzero(np.atleast_1d(bad).ravel())[0])
        raise NearSingularMetric(
            f"metric determinant {float(np.min(det)):.3e} below floor {floor:.1e}", index=k)
    inv = np.empty_like(G)
    inv[..., 0, 0] = c / det
    inv[..., 1, 1] = a / det
    inv[..., 0, 1] = -b / det
    inv[..., 1, 0] = -G[..., 1, 0] / det
    return inv @ J


def pseudoinverse(surface: ParametricSurface, Y: Array, floor: float = METRIC_FLOOR) -> Array:
    """Left Moore-Penrose inverse ``M(Y)`` of ``jac(Y)^T``; ``M jac^T = I_2``."""
    return left_pseudoinverse(surface.jac(np.asarray(Y, dtype=float)), floor)


# ---------------------------------------------------------------------------
# torus

def torus_implicit(params: TorusParams = TorusParams()) -> ImplicitSurface:
    """``f(X) = (sqrt(X1^2 + X2^2) - R)^2 + X3^2 - r^2``.

    Undefined on the symmetry axis ``X1 = X2 = 0``.
    """
    r, R = params.r, params.R

    def f(X):
        X = np.asarray(X, dtype=float)
        rho = np.hypot(X[..., 0], X[..., 1])
        return (rho - R) ** 2 + X[..., 2] ** 2 - r * r

    def grad(X):
        X = np.asarray(X, dtype=float)
        rho = np.hypot(X[..., 0], X[..., 1])
        g = 2.0 * X.copy()
        g[..., 0] -= 2.0 * R * X[..., 0] / rho
        g[..., 1] -= 2.0 * R * X[..., 1] / rho
        return g

    def hess(X):
        X = np.asarray(X, dtype=float)
        rho2 = X[..., 0] ** 2 + X[..., 1] ** 2
        w = np.stack([X[..., 1], -X[..., 0], np.zeros_like(X[..., 0])], axis=-1)
        coef = 2.0 * R / rho2 ** 1.5
        H = 2.0 * np.eye(3) - coef[..., None, None] * w[..., :, None] * w[..., None, :]
        return H

    def in_domain(X):
        X = np.asarray(X, dtype=float)
        return X[..., 0] ** 2 + X[..., 1] ** 2 > (1e-12 * R) ** 2

    return ImplicitSurface("torus", f, grad, hess, {"r": r, "R": R}, in_domain)


def torus_parametric(params: TorusParams = TorusParams()) -> ParametricSurface:
    r, R = params.r, params.R

    def chi(Y):
        Y = np.asarray(Y, dtype=float)
        a, b = TWO_PI * Y[..., 0], TWO_PI * Y[..., 1]
        rho = r * np.cos(b) + R
        return np.stack([rho * np.sin(a), rho * np.cos(a), r * np.sin(b)], axis=-1)

    def jac(Y):
        Y = np.asarray(Y, dtype=float)
        a, b = TWO_PI * Y[..., 0], TWO_PI * Y[..., 1]
        sa, ca, sb, cb = np.sin(a), np.cos(a), np.sin(b), np.cos(b)
        rho = r * cb + R
        zero = np.zeros_like(a)
        du = TWO_PI * np.stack([rho * ca, -rho * sa, zero], axis=-1)
        dv = TWO_PI * np.stack([-r * sb * sa, -r * sb * ca, r * cb], axis=-1)
        return np.stack([du, dv], axis=-2)

    def hess(Y):
        Y = np.asarray(Y, dtype=float)
        a, b = TWO_PI * Y[..., 0], TWO_PI * Y[..., 1]
        sa, ca, sb, cb = np.sin(a), np.cos(a), np.sin(b), np.cos(b)
        rho = r * cb + R
        zero = np.zeros_like(a)
        w = TWO_PI ** 2
        uu = -w * np.stack([rho * sa, rho * ca, zero], axis=-1)
        uv = w * np.stack([-r * sb * ca, r * sb * sa, zero], axis=-1)
        vv = -w * np.stack([r * cb * sa, r * cb * ca, r * sb], axis=-1)
        H = np.empty(a.shape + (3, 2, 2))
        H[..., 0, 0] = uu
        H[..., 0, 1] = uv
        H[..., 1, 0] = uv
        H[..., 1, 1] = vv
        return H

    return ParametricSurface("torus", chi, jac, hess, {"r": r, "R": R},
                             implicit=torus_implicit(params))


# ---------------------------------------------------------------------------
# sphere and plane (oracle surfaces)

def sphere_implicit(R: float = 1.0) -> ImplicitSurface:
    """``f(X) = |X|^2 - R^2``."""
    if R <= 0:
        raise ValueError("sphere requires R > 0")

    def f(X):
        X = np.asarray(X, dtype=float)
        return np.sum(X * X, axis=-1) - R * R

    def grad(X):
        return 2.0 * np.asarray(X, dtype=float)

    def hess(X):
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(2.0 * np.eye(3), X.shape[:-1] + (3, 3)).copy()

    return ImplicitSurface("sphere", f, grad, hess, {"R": R})


def sphere_parametric(R: float = 1.0) -> ParametricSurface:
    """Longitude/latitude chart; singular at the poles ``Y2 = +-1/4``."""

    def chi(Y):
        Y = np.asarray(Y, dtype=float)
        a, b = TWO_PI * Y[..., 0], TWO_PI * Y[..., 1]
        return R * np.stack([np.cos(a) * np.cos(b), np.sin(a) * np.cos(b), np.sin(b)], axis=-1)

    def jac(Y):
        Y = np.asarray(Y, dtype=float)
        a, b = TWO_PI * Y[..., 0], TWO_PI * Y[..., 1]
        sa, ca, sb, cb = np.sin(a), np.cos(a), np.sin(b), np.cos(b)
        du = TWO_PI * R * np.stack([-sa * cb, ca * cb, np.zeros_like(a)], axis=-1)
        dv = TWO_PI * R * np.stack([-ca * sb, -sa * sb, cb], axis=-1)
        return np.stack([du, dv], axis=-2)

    def hess(Y):
        return fd_hessian(chi, Y)

    return ParametricSurface("sphere", chi, jac, hess, {"R": R}, implicit=sphere_implicit(R))


def plane_implicit() -> ImplicitSurface:
    """The plane ``X3 = 0`` as ``f(X) = X3``."""

    def f(X):
        return np.asarray(X, dtype=float)[..., 2].copy()

    def grad(X):
        X = np.asarray(X, dtype=float)
        g = np.zeros_like(X)
        g[..., 2] = 1.0
        return g

    def hess(X):
        X = np.asarray(X, dtype=float)
        return np.zeros(X.shape[:-1] + (3, 3))

    return ImplicitSurface("plane", f, grad, hess, {})


def flat_parametric() -> ParametricSurface:
    """``chi(Y) = (Y1, Y2, 0)``: the identity chart of the plane."""

    def chi(Y):
        Y = np.asarray(Y, dtype=float)
        return np.concatenate([Y, np.zeros(Y.shape[:-1] + (1,))], axis=-1)

    def jac(Y):
        Y = np.asarray(Y, dtype=float)
        J = np.zeros(Y.shape[:-1] + (2, 3))
        J[..., 0, 0] = 1.0
        J[..., 1, 1] = 1.0
        return J

    def hess(Y):
        Y = np.asarray(Y, dtype=float)
        return np.zeros(Y.shape[:-1] + (3, 2, 2))

    return ParametricSurface("flat", chi, jac, hess, {}, implicit=plane_implicit())


# ---------------------------------------------------------------------------
# Klein bottle

def _klein_chi(Y):
    Y = np.asarray(Y, dtype=float)
    cu, su = np.cos(TWO_PI * Y[..., 0]), np.sin(TWO_PI * Y[..., 0])
    cv, sv = np.cos(TWO_PI * Y[..., 1]), np.sin(TWO_PI * Y[..., 1])
    x1 = -(2.0 / 15.0) * cu * (3 * cv - 30 * su + 90 * cu ** 4 * su
                               - 60 * cu ** 6 * su + 5 * cu * cv * su)
    x2 = -(1.0 / 15.0) * su * (3 * cv - 3 * cu ** 2 * cv - 48 * cu ** 4 * cv
                               + 48 * cu ** 6 * cv + 60 * su + 5 * cu * cv * su
                               - 5 * cu ** 3 * cv * su - 80 * cu ** 5 * cv * su
                               + 80 * cu ** 7 * cv * su)
    x3 = (2.0 / 15.0) * (3 + 5 * cu * su) * sv
    return np.stack([x1, x2, x3], axis=-1)


def klein_parametric(step: float = FD_STEP, hess_step: float = FD_HESS_STEP) -> ParametricSurface:
    """Klein bottle immersion; derivatives by central finite differences."""

    def jac(Y):
        return fd_jacobian(_klein_chi, Y, step)

    def hess(Y):
        return fd_hessian(_klein_chi, Y, hess_step)

    return ParametricSurface("klein", _klein_chi, jac, hess, {})


# ---------------------------------------------------------------------------
# bump surface

def _bump_parts(x, y, v):
    """Bump value and its first/second partials, exact zero outside the shrunken disc."""
    s = 1.0 - x * x - y * y
    inside = s > BUMP_CUTOFF
    s_safe = np.where(inside, s, 1.0)
    ln2 = np.log(2.0)
    b = np.where(inside, v * np.exp(-ln2 / s_safe), 0.0)
    gx = -2.0 * ln2 * x / s_safe ** 2
    gy = -2.0 * ln2 * y / s_safe ** 2
    gxx = -2.0 * ln2 / s_safe ** 2 - 8.0 * ln2 * x * x / s_safe ** 3
    gyy = -2.0 * ln2 / s_safe ** 2 - 8.0 * ln2 * y * y / s_safe ** 3
    gxy = -8.0 * ln2 * x * y / s_safe ** 3
    bx, by = b * gx, b * gy
    bxx = b * (gx * gx + gxx)
    byy = b * (gy * gy + gyy)
    bxy = b * (gx * gy + gxy)
    return b, bx, by, bxx, bxy, byy


def bump(x, y, v: float = 3.0):
    """``v * 2**(-1/(1 - x^2 - y^2))`` inside the unit disc, zero outside."""
    return _bump_parts(np.asarray(x, float), np.asarray(y, float), v)[0]


def bump_surface(params: BumpSurfaceParams = BumpSurfaceParams()) -> ImplicitSurface:
    """Flattened sphere with two bumps: ``f = X1^2 + X2^2 + c^2 (X3 - phi)^2 - r^2``.

    ``phi(X1, X2) = bump(X1 - 1, X2) + bump(X1 + 1, X2)``.
    """
    r, c, v = params.r, params.c, params.v
    c2 = c * c

    def phi_parts(X):
        x, y = X[..., 0], X[..., 1]
        p = _bump_parts(x - 1.0, y, v)
        q = _bump_parts(x + 1.0, y, v)
        return [pi + qi for pi, qi in zip(p, q)]

    def f(X):
        X = np.asarray(X, dtype=float)
        phi = phi_parts(X)[0]
        return X[..., 0] ** 2 + X[..., 1] ** 2 + c2 * (X[..., 2] - phi) ** 2 - r * r

    def grad(X):
        X = np.asarray(X, dtype=float)
        phi, px, py, *_ = phi_parts(X)
        w = X[..., 2] - phi
        return np.stack([2 * X[..., 0] - 2 * c2 * w * px,
                         2 * X[..., 1] - 2 * c2 * w * py,
                         2 * c2 * w], axis=-1)

    def hess(X):
        X = np.asarray(X, dtype=float)
        phi, px, py, pxx, pxy, pyy = phi_parts(X)
        w = X[..., 2] - phi
        H = np.empty(X.shape[:-1] + (3, 3))
        H[..., 0, 0] = 2 + 2 * c2 * px * px - 2 * c2 * w * pxx
        H[..., 1, 1] = 2 + 2 * c2 * py * py - 2 * c2 * w * pyy
        H[..., 0, 1] = H[..., 1, 0] = 2 * c2 * px * py - 2 * c2 * w * pxy
        H[..., 0, 2] = H[..., 2, 0] = -2 * c2 * px
        H[..., 1, 2] = H[..., 2, 1] = -2 * c2 * py
        H[..., 2, 2] = 2 * c2
        return H

    def phi(X):
        return phi_parts(np.asarray(X, dtype=float))[0]

    return ImplicitSurface("bump_sphere", f, grad, hess, {"r": r, "c": c, "v": v},
                           aux={"phi": phi})


# ---------------------------------------------------------------------------
# catalog

IMPLICIT_CATALOG = {
    "torus": lambda p: torus_implicit(TorusParams(**p)),
    "sphere": lambda p: sphere_implicit(**p),
    "bump_sphere": lambda p: bump_surface(BumpSurfaceParams(**p)),
    "plane": lambda p: plane_implicit(**p),
}

PARAMETRIC_CATALOG = {
    "torus": lambda p: torus_parametric(TorusParams(**p)),
    "klein": lambda p: klein_parametric(**p),
    "sphere": lambda p: sphere_parametric(**p),
    "flat": lambda p: flat_parametric(**p),
}

SURFACE_DEFAULTS = {
    "torus": {"r": 1.0, "R": 4.0},
    "sphere": {"R": 1.0},
    "bump_sphere": {"r": 2.5, "c": 4.0, "v": 3.0},
    "plane": {},
    "klein": {},
    "flat": {},
}


def make_implicit(name: str, params: dict | None = None) -> ImplicitSurface:
    if name not in IMPLICIT_CATALOG:
        raise KeyError(f"no implicit surface named {name!r}")
    return IMPLICIT_CATALOG[name](dict(params or {}))


def make_parametric(name: str, params: dict | None = None) -> ParametricSurface:
    if name not in PARAMETRIC_CATALOG:
        raise KeyError(f"no parametric surface named {name!r}")
    return PARAMETRIC_CATALOG[name](dict(params or {}))
