"""Closed polygonal curves and their discrete Frenet quantities.

Nodes are stored without a repeated endpoint; every neighbour lookup is
periodic (index arithmetic modulo M). Segment ``k`` joins node ``k-1`` to
node ``k``, so ``d[k] = |X[k] - X[k-1]|`` and ``d[0]`` is the closing
segment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateSegment

DEFAULT_DELTA = 1e-5


def _check_nodes(nodes: np.ndarray, dim: int) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 2 or nodes.shape[1] != dim:
        raise ValueError(f"nodes must have shape (M, {dim}), got {nodes.shape}")
    if nodes.shape[0] < 3:
        raise ValueError(f"a closed curve needs at least 3 nodes, got {nodes.shape[0]}")
    if not np.all(np.isfinite(nodes)):
        raise ValueError("nodes contain non-finite values")
    return nodes


@dataclass(frozen=True, eq=False)
class DiscreteCurve3:
    """Periodic polygon of M nodes in R^3."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = _check_nodes(self.nodes, 3)
        object.__setattr__(self, "nodes", nodes)
        segment_lengths_array(nodes)

    @property
    def M(self) -> int:
        return self.nodes.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def u(self) -> np.ndarray:
        return np.arange(self.M) / self.M

    def shifted(self, j: int) -> "DiscreteCurve3":
        return DiscreteCurve3(np.roll(self.nodes, -j, axis=0))


@dataclass(frozen=True, eq=False)
class DiscreteCurve2:
    """Periodic-up-to-winding polygon in the universal cover of the unit square.

    Coordinates are not wrapped; the node after the last one is
    ``nodes[0] + winding``.
    """

    nodes: np.ndarray
    winding: tuple[int, int] = field(default=(0, 0))

    def __post_init__(self):
        nodes = _check_nodes(self.nodes, 2)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "winding", (int(self.winding[0]), int(self.winding[1])))
        segment_lengths_array(nodes, self.shift)

    @property
    def M(self) -> int:
        return self.nodes.shape[0]

    @property
    def shift(self) -> np.ndarray:
        return np.asarray(self.winding, dtype=float)

    @property
    def u(self) -> np.ndarray:
        return np.arange(self.M) / self.M


def neighbours(nodes: np.ndarray, shift: np.ndarray | None = None):
    """Return ``(prev, next)`` node arrays with periodic (lifted) wrap-around."""
    prev = np.roll(nodes, 1, axis=0)
    nxt = np.roll(nodes, -1, axis=0)
    if shift is not None:
        prev[0] = nodes[-1] - shift
        nxt[-1] = nodes[0] + shift
    return prev, nxt


def segment_lengths_array(nodes: np.ndarray, shift: np.ndarray | None = None) -> np.ndarray:
    prev, _ = neighbours(nodes, shift)
    d = np.linalg.norm(nodes - prev, axis=1)
    bad = np.flatnonzero(~(d > 0.0))
    if bad.size:
        k = int(bad[0])
        raise DegenerateSegment(f"nodes {(k - 1) % len(d)} and {k} coincide", index=k)
    return d


def segment_lengths(curve: DiscreteCurve3) -> np.ndarray:
    """Lengths ``d_k = |X_k - X_{k-1}|`` of the M closing-polygon segments.

    Raises
    ------
    DegenerateSegment
        If two consecutive nodes coincide.
    """
    nodes = curve.nodes if isinstance(curve, DiscreteCurve3) else np.asarray(curve, float)
    return segment_lengths_array(nodes)


def curvature_vectors(nodes: np.ndarray, d: np.ndarray | None = None):
    """Finite-volume curvature vectors and centred tangents.

    Returns ``(K, T, d, d_next)`` where ``K_k`` is
    ``2/(d_k + d_{k+1}) * ((X_{k+1}-X_k)/d_{k+1} - (X_k-X_{k-1})/d_k)``
    and ``T_k = (X_{k+1} - X_{k-1}) / (d_k + d_{k+1})``.
    """
    if d is None:
        d = segment_lengths_array(nodes)
    prev, nxt = neighbours(nodes)
    d_next = np.roll(d, -1)
    flux_fwd = (nxt - nodes) / d_next[:, None]
    flux_bwd = (nodes - prev) / d[:, None]
    dual = d + d_next
    K = (2.0 / dual)[:, None] * (flux_fwd - flux_bwd)
    T = (nxt - prev) / dual[:, None]
    return K, T, d, d_next


@dataclass(frozen=True, eq=False)
class FrenetData:
    d: np.ndarray
    T: np.ndarray
    N: np.ndarray
    kappa: np.ndarray
    B: np.ndarray
    total_length: float


def frenet_data(curve: DiscreteCurve3, delta: float = DEFAULT_DELTA) -> FrenetData:
    """Discrete tangent, regularised normal, curvature and binormal per node.

    The tangent is the centred chord ``(X_{k+1}-X_{k-1})/(d_{k+1}+d_k)`` and is
    not renormalised. The normal is the curvature vector divided by
    ``delta + kappa``, so it is the zero vector on straight stretches. The
    binormal ``T x N`` is rescaled to unit length when its norm exceeds
    ``delta`` and set to zero otherwise.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    nodes = curve.nodes if isinstance(curve, DiscreteCurve3) else _check_nodes(curve, 3)
    K, T, d, _ = curvature_vectors(nodes)
    kappa = np.linalg.norm(K, axis=1)
    denom = delta + kappa
    with np.errstate(invalid="ignore", divide="ignore"):
        N = np.where(denom[:, None] > 0, K / np.where(denom > 0, denom, 1.0)[:, None], 0.0)
    B = np.cross(T, N)
    bn = np.linalg.norm(B, axis=1)
    floor = delta if delta > 0 else 0.0
    keep = bn > floor
    B = np.where(keep[:, None], B / np.where(keep, bn, 1.0)[:, None], 0.0)
    return FrenetData(d=d, T=T, N=N, kappa=kappa, B=B, total_length=float(np.sum(d)))


def torsion_diagnostic(curve: DiscreteCurve3, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Discrete torsion per node, NaN where the curvature does not exceed ``delta``.

    Uses the unit normal ``N`` and binormal ``B`` of the discrete frame and the
    centred arclength derivative ``dN/ds ~ (N_{k+1} - N_{k-1}) / (d_k + d_{k+1})``
    projected on ``B``. Diagnostic only.

    On a sampled open arc the two wrap-around nodes at either end are
    meaningless; callers should ignore them.
    """
    nodes = curve.nodes if isinstance(curve, DiscreteCurve3) else _check_nodes(curve, 3)
    K, T, d, d_next = curvature_vectors(nodes)
    kappa = np.linalg.norm(K, axis=1)
    defined = kappa > delta
    safe = np.where(defined, kappa, 1.0)
    N = K / safe[:, None]
    That = T / np.linalg.norm(T, axis=1)[:, None]
    B = np.cross(That, N)
    B /= np.maximum(np.linalg.norm(B, axis=1), np.finfo(float).tiny)[:, None]
    dN = (np.roll(N, -1, axis=0) - np.roll(N, 1, axis=0)) / (d + d_next)[:, None]
    tau = np.einsum("ij,ij->i", dN, B)
    undefined = ~(defined & np.roll(defined, 1) & np.roll(defined, -1))
    tau[undefined] = np.nan
    return tau


def curve_from_parametric(fn: Callable[[np.ndarray], np.ndarray], M: int) -> DiscreteCurve3:
    """Sample ``fn`` at ``u_k = k/M``.

    ``fn`` may be vectorised (array of u -> (M, 3)) or scalar; both are accepted.
    """
    if M < 3:
        raise ValueError("M must be at least 3")
    u = np.arange(M) / M
    try:
        pts = np.asarray(fn(u), dtype=float)
        if pts.shape != (M, 3):
            raise ValueError
    except (ValueError, TypeError):
        pts = np.array([np.asarray(fn(float(x)), dtype=float) for x in u])
    return DiscreteCurve3(pts)


def dispersion(d: np.ndarray) -> float:
    """``max_k |M d_k / L - 1|``; zero for a uniformly distributed polygon."""
    return float(np.max(np.abs(len(d) * d / np.sum(d) - 1.0)))
