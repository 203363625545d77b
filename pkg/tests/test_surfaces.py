from contextlib import nullcontext

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from curveflow.errors import NearSingularMetric, OutsideRegularityDomain
from curveflow.surfaces import (
    BumpSurfaceParams, TorusParams, bump, bump_surface, fd_hessian, fd_jacobian,
    flat_parametric, klein_parametric, left_pseudoinverse, make_implicit, make_parametric,
    pseudoinverse, sphere_implicit, sphere_parametric, torus_implicit, torus_parametric,
)

RNG = np.random.default_rng(20240601)


# torus ------------------------------------------------------------------------

def test_torus_implicit_points():
    f = torus_implicit(TorusParams(1.0, 4.0)).f
    assert f(np.array([5.0, 0, 0])) == 0.0
    assert f(np.array([4.0, 0, 1.0])) == 0.0
    assert f(np.array([4.0, 0, 0])) == -1.0


def test_torus_params_validation():
    with pytest.raises(ValueError, match="0 < r < R"):
        TorusParams(4.0, 1.0)


def near_torus_points(n, r=1.0, R=4.0):
    Y = RNG.uniform(0, 1, (n, 2))
    X = torus_parametric(TorusParams(r, R)).chi(Y)
    return X + 0.05 * RNG.normal(size=X.shape)


def test_torus_derivatives_match_fd():
    s = torus_implicit(TorusParams(1.0, 4.0))
    X = near_torus_points(100)
    assert np.max(np.abs(s.grad(X) - fd_jacobian(s.f, X, 1e-5))) <= 1e-6
    assert np.max(np.abs(s.hess(X) - fd_hessian(s.f, X, 1e-5, grad=s.grad))) <= 1e-6
    assert np.max(np.abs(s.hess(X) - fd_hessian(s.f, X))) <= 1e-6


def test_torus_axis_outside_domain():
    s = torus_implicit()
    with pytest.raises(OutsideRegularityDomain):
        s.check_domain(np.array([[1.0, 0, 0], [0.0, 0.0, 0.5]]))


def test_torus_chart():
    chi = torus_parametric(TorusParams(1.0, 4.0)).chi
    np.testing.assert_allclose(chi(np.array([0.0, 0.0])), [0, 5, 0], atol=1e-15)


def test_torus_chart_on_implicit():
    p = TorusParams(1.0, 4.0)
    Y = RNG.uniform(-2, 2, (1000, 2))
    assert np.max(np.abs(torus_implicit(p).f(torus_parametric(p).chi(Y)))) <= 1e-10


def test_torus_metric_closed_form():
    s = torus_parametric(TorusParams(1.0, 4.0))
    Y = RNG.uniform(0, 1, (200, 2))
    closed = 16 * np.pi ** 4 * (4 + np.cos(2 * np.pi * Y[:, 1])) ** 2
    np.testing.assert_allclose(s.metric_det(Y), closed, rtol=1e-12)
    # 25 * 16 pi^4 at v = 0
    assert s.metric_det(np.array([0.3, 0.0])) == pytest.approx(38963.636413600965, rel=1e-12)
    assert np.all(s.metric_det(Y) >= 16 * np.pi ** 4 * 3 ** 2 * (1 - 1e-12))


def test_torus_parametric_derivatives_match_fd():
    s = torus_parametric(TorusParams(1.0, 4.0))
    Y = RNG.uniform(0, 1, (100, 2))
    J_fd = fd_jacobian(s.chi, Y, 1e-5)
    assert np.max(np.abs(s.jac(Y) - J_fd)) <= 1e-6
    H_fd = fd_hessian(s.chi, Y)
    assert np.max(np.abs(s.hess(Y) - H_fd) / (1 + np.abs(s.hess(Y)))) <= 1e-6


# klein -------------------------------------------------------------------------

def klein_symbolic():
    u, v = sp.symbols("u v", real=True)
    cu, su = sp.cos(2 * sp.pi * u), sp.sin(2 * sp.pi * u)
    cv, sv = sp.cos(2 * sp.pi * v), sp.sin(2 * sp.pi * v)
    x1 = -sp.Rational(2, 15) * cu * (3 * cv - 30 * su + 90 * cu ** 4 * su - 60 * cu ** 6 * su
                                     + 5 * cu * cv * su)
    x2 = -sp.Rational(1, 15) * su * (3 * cv - 3 * cu ** 2 * cv - 48 * cu ** 4 * cv
                                     + 48 * cu ** 6 * cv + 60 * su + 5 * cu * cv * su
                                     - 5 * cu ** 3 * cv * su - 80 * cu ** 5 * cv * su
                                     + 80 * cu ** 7 * cv * su)
    x3 = sp.Rational(2, 15) * (3 + 5 * cu * su) * sv
    X = sp.Matrix([x1, x2, x3])
    J = X.jacobian([u, v]).T  # rows d/du, d/dv
    H = [[[sp.diff(X[k], a, b) for b in (u, v)] for a in (u, v)] for k in range(3)]
    return (sp.lambdify((u, v), X, "numpy"), sp.lambdify((u, v), J, "numpy"),
            sp.lambdify((u, v), H, "numpy"))


@pytest.fixture(scope="module")
def klein_sym():
    return klein_symbolic()


def test_klein_fd_matches_symbolic(klein_sym):
    chi_s, jac_s, hess_s = klein_sym
    k = klein_parametric()
    Y = RNG.uniform(0, 1, (40, 2))
    for y in Y:
        np.testing.assert_allclose(k.chi(y), np.asarray(chi_s(*y), float).ravel(), atol=1e-13)
        J = np.asarray(jac_s(*y), float)
        assert np.max(np.abs(k.jac(y) - J)) <= 1e-6 * max(1.0, np.max(np.abs(J)))
        H = np.asarray(hess_s(*y), float)
        assert np.max(np.abs(k.hess(y) - H)) <= 1e-5 * max(1.0, np.max(np.abs(H)))


def test_klein_v0_slice():
    u = np.linspace(0, 1, 57)
    X = klein_parametric().chi(np.stack([u, 0 * u], axis=-1))
    assert np.max(np.abs(X[:, 2])) == 0.0


def test_klein_periodic():
    k = klein_parametric()
    Y = RNG.uniform(0, 1, (100, 2))
    for shift in ([1.0, 0.0], [0.0, 1.0]):
        np.testing.assert_allclose(k.chi(Y + shift), k.chi(Y), atol=1e-12)


def test_klein_metric_range():
    s = np.arange(200) / 200
    U, V = np.meshgrid(s, s, indexing="ij")
    det = klein_parametric().metric_det(np.stack([U, V], axis=-1))
    assert det.min() > 0.0145
    assert det.max() < 32020


# bump surface --------------------------------------------------------------------

def test_bump_values():
    assert bump(0.0, 0.0, 3.0) == 1.5
    assert bump(1.0, 0.0, 3.0) == 0.0
    assert bump(1.5, 0.0, 3.0) == 0.0


def test_bump_surface_point():
    assert bump_surface(BumpSurfaceParams(2.5, 4.0, 3.0)).f(np.array([0.0, 2.5, 0.0])) == 0.0


def test_bump_params_validation():
    with pytest.raises(ValueError):
        BumpSurfaceParams(r=-1.0)


def near_bump_points(n):
    th = RNG.uniform(0, 2 * np.pi, n)
    rho = np.sqrt(RNG.uniform(0, 2.4 ** 2, n))
    x, y = rho * np.cos(th), rho * np.sin(th)
    s = bump_surface()
    z = s.aux["phi"](np.stack([x, y, 0 * x], -1)) + np.sqrt(6.25 - rho ** 2) / 4
    return np.stack([x, y, z + 0.01 * RNG.normal(size=n)], axis=-1)


def test_bump_derivatives_match_fd():
    s = bump_surface()
    X = near_bump_points(100)
    # include points on the bump shoulders where the derivatives are largest
    shoulder = np.array([[1.0 + 0.5 * np.cos(a), 0.5 * np.sin(a), 0.9] for a in np.linspace(0, 6, 8)])
    X = np.concatenate([X, shoulder])
    g, H = s.grad(X), s.hess(X)
    scale_g = np.maximum(1.0, np.abs(g))
    assert np.max(np.abs(g - fd_jacobian(s.f, X, 1e-6)) / scale_g) <= 1e-6
    H_fd = fd_hessian(s.f, X, 1e-6, grad=s.grad)
    assert np.max(np.abs(H - H_fd) / np.maximum(1.0, np.abs(H))) <= 1e-6


def test_bump_zero_outside_support():
    s = bump_surface()
    X = np.array([[0.0, 1.5, 0.3], [2.2, 0.0, 0.1]])
    np.testing.assert_array_equal(s.aux["phi"](X), 0.0)
    # outside both supports the surface is the plain flattened sphere
    expected = X[:, 0] ** 2 + X[:, 1] ** 2 + 16 * X[:, 2] ** 2 - 6.25
    np.testing.assert_allclose(s.f(X), expected, rtol=1e-15)


# pseudoinverse -----------------------------------------------------------------

def test_pseudoinverse_examples():
    np.testing.assert_array_equal(left_pseudoinverse(np.array([[1.0, 0, 0], [0, 1.0, 0]])),
                                  [[1, 0, 0], [0, 1, 0]])
    np.testing.assert_allclose(left_pseudoinverse(np.array([[2.0, 0, 0], [0, 1.0, 0]])),
                               [[0.5, 0, 0], [0, 1, 0]], atol=1e-16)


def test_pseudoinverse_random_left_identity():
    J = RNG.normal(size=(1000, 2, 3))
    Mp = left_pseudoinverse(J)
    err = np.abs(Mp @ np.swapaxes(J, -1, -2) - np.eye(2))
    assert err.max() <= 1e-10


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=6, max_size=6))
def test_pseudoinverse_property(vals):
    J = np.array(vals).reshape(2, 3)
    G = J @ J.T
    if np.linalg.det(G) <= 1e-6 * max(1.0, np.trace(G)) ** 2:
        with pytest.raises(NearSingularMetric) if np.linalg.det(G) <= 1e-10 else nullcontext():
            left_pseudoinverse(J)
        return
    Mp = left_pseudoinverse(J)
    np.testing.assert_allclose(Mp @ J.T, np.eye(2), atol=1e-10)
    np.testing.assert_allclose(Mp, np.linalg.pinv(J.T), atol=1e-9 * max(1.0, np.abs(Mp).max()))


def test_pseudoinverse_singular():
    with pytest.raises(NearSingularMetric):
        left_pseudoinverse(np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]))


def test_pseudoinverse_of_surface():
    s = torus_parametric()
    Y = RNG.uniform(0, 1, (50, 2))
    Mp = pseudoinverse(s, Y)
    np.testing.assert_allclose(Mp @ np.swapaxes(s.jac(Y), -1, -2), np.broadcast_to(np.eye(2), (50, 2, 2)),
                               atol=1e-12)


# finite differences -------------------------------------------------------------

def test_fd_linear_map_exact():
    A = RNG.normal(size=(3, 2))
    J = fd_jacobian(lambda Y: Y @ A.T, np.array([0.3, -0.2]))
    np.testing.assert_allclose(J, A.T, atol=1e-10)


def test_fd_quadratic_hessian():
    Q = RNG.normal(size=(3, 3))
    H = fd_hessian(lambda X: np.einsum("...i,ij,...j->...", X, Q, X), np.array([0.1, 0.5, -1.0]))
    np.testing.assert_allclose(H, Q + Q.T, atol=1e-6)


def test_fd_rejects_bad_step():
    with pytest.raises(ValueError):
        fd_jacobian(np.sin, np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        fd_hessian(np.sin, np.zeros(2), -1.0)


def test_sphere_and_flat_charts():
    s = sphere_parametric(1.0)
    Y = RNG.uniform(0, 1, (50, 2)) * [1, 0.4] - [0, 0.2]
    np.testing.assert_allclose(sphere_implicit(1.0).f(s.chi(Y)), 0.0, atol=1e-14)
    J_fd = fd_jacobian(s.chi, Y)
    np.testing.assert_allclose(s.jac(Y), J_fd, atol=1e-6)
    fl = flat_parametric()
    np.testing.assert_array_equal(fl.hess(Y), 0.0)


def test_catalog():
    assert make_implicit("torus", {"r": 1.0, "R": 3.0}).params == {"r": 1.0, "R": 3.0}
    assert make_parametric("klein").name == "klein"
    with pytest.raises(KeyError):
        make_implicit("klein")
    with pytest.raises(KeyError):
        make_parametric("bump_sphere")


def test_surface_grid_faces():
    verts, faces = torus_parametric().grid(8)
    assert verts.shape == (64, 3)
    assert faces.shape == (64, 4)
    assert faces.min() == 0 and faces.max() == 63
