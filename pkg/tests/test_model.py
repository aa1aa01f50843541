import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hawkesneuro.errors import DataError
from hawkesneuro.model import (
    ExpHawkesModel,
    PiecewiseHawkesModel,
    adjacency,
    compensator,
    intensity,
    intensity_at,
    load_model,
    save_model,
    spectral_radius,
)


def exp1(mu, a, beta):
    return ExpHawkesModel([mu], [[a]], beta)


def brute_intensity(model, history, j, t):
    """Direct kernel sum over strictly earlier events."""
    lam = model.mu[j]
    for l, src in enumerate(history):
        for s in src:
            if s < t:
                lam += float(model.kernel(j, l, t - s))
    return lam


def test_poisson_intensity():
    m = ExpHawkesModel([0.7, 0.7], np.zeros((2, 2)), 3.0)
    assert intensity_at(m, [np.array([0.1, 0.5]), np.array([0.2])], 1.0, 0) == 0.7


def test_exp_kernel_value():
    assert intensity_at(exp1(0.0, 0.5, 2.0), [np.array([0.0])], 1.0, 0) == pytest.approx(0.5 * 2 * math.exp(-2), abs=1e-12)


def test_signed_piecewise_value():
    m = PiecewiseHawkesModel([1.0], [[[-0.4]]], 1.0)
    assert intensity_at(m, [np.array([0.5])], 1.0, 0) == pytest.approx(0.6)


def test_left_continuity():
    m = exp1(0.2, 0.5, 1.0)
    assert intensity_at(m, [np.array([1.0])], 1.0, 0) == pytest.approx(0.2)


def test_compensator_examples():
    m = ExpHawkesModel([0.7], [[0.0]], 1.0)
    assert compensator(m, [np.array([1.0])], 0, 10.0) == pytest.approx(7.0)
    assert compensator(exp1(0.0, 1.0, 1.0), [np.array([0.0])], 0, 60.0) == pytest.approx(1.0, abs=1e-12)
    want = 0.5 * 2 + 0.5 * (1 - math.exp(-2))
    assert compensator(exp1(0.5, 0.5, 2.0), [np.array([1.0])], 0, 2.0) == pytest.approx(want, abs=1e-10)
    assert want == pytest.approx(1.43233, abs=1e-5)


def test_adjacency_examples():
    A = np.array([[0.1, 0.2], [0.0, 0.3]])
    np.testing.assert_array_equal(adjacency(ExpHawkesModel([1, 1], A, 2.0)), A)
    pw = PiecewiseHawkesModel([1.0], [[[1.0, 0.5]]], 0.1)
    assert adjacency(pw)[0, 0] == pytest.approx(0.15)
    assert not np.any(adjacency(ExpHawkesModel([0, 0], np.zeros((2, 2)), 1.0)))


def test_adjacency_scales_with_alpha():
    rng = np.random.default_rng(3)
    alpha = rng.uniform(-1, 1, (3, 3, 4))
    a = adjacency(PiecewiseHawkesModel(np.ones(3), alpha, 0.05))
    b = adjacency(PiecewiseHawkesModel(np.ones(3), 2.5 * alpha, 0.05))
    np.testing.assert_allclose(b, 2.5 * a, rtol=1e-12)
    # exact bin sum of the kernel
    np.testing.assert_allclose(a, 0.05 * alpha.sum(axis=2), rtol=1e-12)


@pytest.mark.parametrize(
    "adj, want",
    [(np.zeros((3, 3)), 0.0), (0.5 * np.eye(4), 0.5), ([[0, 0.9], [0.9, 0]], 0.9)],
)
def test_spectral_radius_examples(adj, want):
    assert spectral_radius(adj) == pytest.approx(want, abs=1e-8)


def test_spectral_radius_matches_eigenvalues():
    rng = np.random.default_rng(0)
    for _ in range(10):
        B = rng.uniform(0, 1, (5, 5)) * (rng.uniform(size=(5, 5)) < 0.5)
        want = max(abs(np.linalg.eigvals(B)))
        assert spectral_radius(B) == pytest.approx(want, rel=1e-6, abs=1e-9)


def test_spectral_radius_nilpotent():
    assert spectral_radius([[0, 1, 1], [0, 0, 1], [0, 0, 0]]) == 0.0


def test_invalid_models():
    with pytest.raises(DataError):
        ExpHawkesModel([1.0], [[-0.1]], 1.0)
    with pytest.raises(DataError):
        ExpHawkesModel([1.0], [[0.1]], 0.0)
    with pytest.raises(DataError):
        PiecewiseHawkesModel([1.0], [[0.1]], 0.1)


def test_roundtrip_json(tmp_path):
    m = ExpHawkesModel([0.1, 0.2], [[0.3, 0], [0.4, 0.1]], 3.0)
    save_model(m, tmp_path / "m.json")
    r = load_model(tmp_path / "m.json")
    np.testing.assert_allclose(r.A, m.A, rtol=1e-12)
    p = PiecewiseHawkesModel([0.5], [[[1.0, -0.2, 0.3]]], 0.1)
    save_model(p, tmp_path / "p.json")
    q = load_model(tmp_path / "p.json")
    np.testing.assert_allclose(q.alpha, p.alpha, rtol=1e-12)
    assert q.delta == p.delta


def _random_history(rng, m, T, n):
    return [np.sort(rng.uniform(0, T, rng.integers(0, n))) for _ in range(m)]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_intensity_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    hist = _random_history(rng, 2, 5.0, 8)
    t = rng.uniform(0, 5, 6)
    e = ExpHawkesModel(rng.uniform(0, 1, 2), rng.uniform(0, 1, (2, 2)), rng.uniform(0.5, 5))
    p = PiecewiseHawkesModel(rng.uniform(0, 1, 2), rng.uniform(-1, 1, (2, 2, 3)), rng.uniform(0.1, 0.5))
    for m in (e, p):
        for j in range(2):
            got = intensity(m, hist, j, t)
            want = [brute_intensity(m, hist, j, s) for s in t]
            np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_compensator_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    T = 4.0
    hist = _random_history(rng, 2, T, 8)
    e = ExpHawkesModel(rng.uniform(0.1, 1, 2), rng.uniform(0, 0.5, (2, 2)), 2.0)
    p = PiecewiseHawkesModel(rng.uniform(0.1, 1, 2), rng.uniform(-1.5, 1.5, (2, 2, 3)), 0.3)
    for m in (e, p):
        for j in range(2):
            breaks = sorted(set(np.concatenate(hist).tolist()) | {0.0, T})
            if isinstance(m, PiecewiseHawkesModel):
                extra = np.concatenate([s[:, None] + m.delta * np.arange(4) for s in hist if s.size] or [[]])
                breaks = sorted(set(breaks) | {float(b) for b in np.ravel(extra) if b < T})
            total = sum(
                integrate.quad(lambda s: max(intensity_at(m, hist, s, j), 0.0), a, b, epsabs=1e-12, epsrel=1e-10)[0]
                for a, b in zip(breaks[:-1], breaks[1:])
            )
            assert compensator(m, hist, j, T) == pytest.approx(total, rel=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_compensator_derivative_is_clamped_intensity(seed):
    rng = np.random.default_rng(seed)
    hist = _random_history(rng, 2, 4.0, 6)
    p = PiecewiseHawkesModel([0.3, 0.3], rng.uniform(-2, 2, (2, 2, 3)), 0.25)
    e = ExpHawkesModel([0.3, 0.2], rng.uniform(0, 1, (2, 2)), 1.5)
    h = 1e-6
    for m in (e, p):
        pts = np.linspace(0.01, 3.99, 200)
        for j in range(2):
            c = compensator(m, hist, j, pts)
            assert np.all(np.diff(c) >= -1e-12)
            bps = np.concatenate([s[:, None] + 0.25 * np.arange(4) for s in hist if s.size]).ravel()
            for t in pts:
                if np.min(np.abs(bps - t)) < 1e-4:
                    continue
                num = (compensator(m, hist, j, t + h) - compensator(m, hist, j, t)) / h
                assert abs(num - max(intensity_at(m, hist, t + h / 2, j), 0.0)) <= 1e-4
