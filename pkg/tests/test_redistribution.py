import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curveflow.curve import dispersion
from curveflow.errors import DegenerateSegment
from curveflow.redistribution import (
    RedistributionConfig, alpha_discrete, dual_weights, mean_curvature_velocity,
    zero_mean_residual,
)


def brute_alpha(kv, d, omega, mean_rule):
    """Independent replay: loop over the recurrence, then fix the constant."""
    M = len(d)
    L = sum(d)
    w = [(d[k] + d[(k + 1) % M]) / 2 for k in range(M)]
    if mean_rule == "segment":
        mean = sum(kv[k] * d[k] for k in range(M)) / L
    else:
        mean = sum(kv[k] * w[k] for k in range(M)) / L
    bracket = [kv[k] * d[k] - mean * d[k] + (L / M - d[k]) * omega for k in range(M)]
    rel = {1: 0.0}
    for i in list(range(2, M)) + [0]:
        prev = i - 1 if i != 0 else M - 1
        rel[i] = rel[prev] + bracket[i]
    c = -sum(rel[k] * w[k] for k in range(M)) / sum(w)
    return np.array([rel[k] + c for k in range(M)]), np.array(bracket)


def test_uniform_zero_curvature_gives_zero():
    d = np.full(9, 0.3)
    np.testing.assert_array_equal(alpha_discrete(np.zeros(9), np.zeros(9), d, omega=10.0), 0.0)


def test_uniform_constant_product_gives_zero():
    d = np.full(9, 0.3)
    a = alpha_discrete(np.full(9, 2.0), np.full(9, 1.5), d, omega=10.0)
    assert np.max(np.abs(a)) <= 1e-14


@pytest.mark.parametrize("rule", ["segment", "dual"])
def test_m5_matches_bruteforce(rule):
    rng = np.random.default_rng(11)
    d = rng.uniform(0.5, 1.5, 5)
    kappa, vN = rng.normal(size=5), rng.normal(size=5)
    a = alpha_discrete(kappa, vN, d, omega=3.0, mean=rule)
    ref, bracket = brute_alpha(kappa * vN, d, 3.0, rule)
    np.testing.assert_allclose(a, ref, atol=1e-13)
    for i in range(1, 5):
        assert a[(i + 1) % 5] - a[i] == pytest.approx(bracket[(i + 1) % 5], abs=1e-13)
    assert abs(np.dot(a, dual_weights(d))) <= 1e-13


def test_segment_rule_closes_recurrence():
    rng = np.random.default_rng(12)
    d = rng.uniform(0.5, 1.5, 12)
    kv = rng.normal(size=12)
    a = alpha_discrete(None, None, d, omega=2.0, kv=kv)
    _, bracket = brute_alpha(kv, d, 2.0, "segment")
    # the wrap from node 0 to node 1 is consistent as well
    assert a[1] - a[0] == pytest.approx(bracket[1], abs=1e-13)


def test_unknown_mean_rule():
    with pytest.raises(ValueError):
        alpha_discrete(None, None, np.ones(4), kv=np.zeros(4), mean="median")


def test_degenerate_segment():
    with pytest.raises(DegenerateSegment):
        alpha_discrete(np.zeros(4), np.zeros(4), np.array([1.0, 0.0, 1.0, 1.0]))


def test_config_validation():
    with pytest.raises(ValueError):
        RedistributionConfig(omega=-1.0)


@settings(max_examples=80, deadline=None)
@given(st.integers(3, 60), st.integers(0, 10_000), st.floats(0, 100), st.floats(-50, 50))
def test_alpha_properties(M, seed, omega, c):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.01, 2.0, M)
    kv = rng.normal(size=M) * 5
    a = alpha_discrete(None, None, d, omega=omega, kv=kv)
    L = d.sum()
    scale = L * max(np.max(np.abs(a)), 1e-300)
    assert abs(np.dot(a, dual_weights(d))) <= 1e-12 * scale
    assert zero_mean_residual(a, d) <= 1e-12
    # telescoping: alpha_{i+1} - alpha_i equals bracket i+1
    mean = np.sum(kv * d) / L
    bracket = kv * d - mean * d + (L / M - d) * omega
    diffs = np.roll(a, -1) - a
    np.testing.assert_allclose(diffs, np.roll(bracket, -1), atol=1e-10 * max(1.0, np.abs(a).max()))
    # shift invariance
    a_shift = alpha_discrete(None, None, d, omega=omega, kv=kv + c)
    np.testing.assert_allclose(a_shift, a, atol=1e-12 * max(1.0, np.abs(kv).max() + abs(c)) * L)


def test_mean_curvature_velocity():
    assert mean_curvature_velocity(np.ones(5), np.zeros(5), np.ones(5)) == 0.0
    d = np.array([0.5, 1.0, 2.0, 0.7])
    assert mean_curvature_velocity(np.full(4, 2.0), np.full(4, 1.5), d) == pytest.approx(3.0)
    rng = np.random.default_rng(13)
    d, k, v = rng.uniform(0.1, 1, 7), rng.normal(size=7), rng.normal(size=7)
    total = 0.0
    for i in range(7):
        total += k[i] * v[i] * (d[i] + d[(i + 1) % 7]) / 2
    assert mean_curvature_velocity(k, v, d) == pytest.approx(total / d.sum(), abs=1e-14)


def frozen_circle_dispersion(omega, steps=2000, dt=1e-4):
    """Move nodes along a fixed unit circle by the omega term alone."""
    rng = np.random.default_rng(14)
    M = 40
    th = np.sort(rng.uniform(0, 2 * np.pi, M))
    out = []
    for n in range(steps):
        chord = 2 * np.sin(np.diff(np.concatenate([th[-1:] - 2 * np.pi, th])) / 2)
        if n % 500 == 0:
            out.append(dispersion(chord))
        a = alpha_discrete(None, None, chord, omega=omega, kv=np.zeros(M))
        th = th + dt * a
    return np.array(out)


def test_omega_drives_uniformity():
    slow, fast = frozen_circle_dispersion(5.0), frozen_circle_dispersion(20.0)
    assert np.all(np.diff(slow) < 0) and np.all(np.diff(fast) < 0)
    assert fast[-1] < slow[-1]
    still = frozen_circle_dispersion(0.0)
    np.testing.assert_allclose(still, still[0], rtol=1e-12)
