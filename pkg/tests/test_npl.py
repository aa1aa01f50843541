import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hawkesneuro.model import PiecewiseHawkesModel, adjacency
from hawkesneuro.npl import (
    LsSystem,
    NplConfig,
    build_ls_system,
    covariates,
    fit_npl,
    gram_matrix,
    kkt_residual,
    moment_vector,
    solve_lasso,
)
from hawkesneuro.simulation import SimConfig, simulate

from conftest import dataset


def numeric_gram(data, K, delta, n=200_001):
    """Midpoint-rule oracle on a fine grid."""
    t = (np.arange(n) + 0.5) * data.t_max / n
    G = 0
    for trial in data.trains:
        X = covariates(trial, t, K, delta)
        G = G + X.T @ X * (data.t_max / n)
    return G


def test_gram_empty_data():
    ds = dataset([[[], []], [[], []]], 5.0)
    G = gram_matrix(ds, 2, 0.1)
    want = np.zeros((5, 5))
    want[0, 0] = 10.0
    np.testing.assert_array_equal(G, want)
    v, _ = moment_vector(ds, 2, 0.1, 0)
    assert not np.any(v)


def test_gram_single_event():
    G = gram_matrix(dataset([[[5.0]]], 10.0), 1, 1.0)
    assert G[1, 1] == pytest.approx(1.0)
    assert G[0, 1] == pytest.approx(1.0)
    assert G[0, 0] == pytest.approx(10.0)


def test_gram_doubles_with_trials():
    rng = np.random.default_rng(0)
    row = [np.sort(rng.uniform(0, 5, 20)), np.sort(rng.uniform(0, 5, 15))]
    one = dataset([row], 5.0)
    two = dataset([row, row], 5.0)
    np.testing.assert_allclose(gram_matrix(two, 3, 0.1), 2 * gram_matrix(one, 3, 0.1), rtol=1e-12)
    np.testing.assert_allclose(moment_vector(two, 3, 0.1, 1)[0], 2 * moment_vector(one, 3, 0.1, 1)[0])


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_gram_matches_fine_grid(seed):
    rng = np.random.default_rng(seed)
    ds = dataset([[np.sort(rng.uniform(0, 3, 6)), np.sort(rng.uniform(0, 3, 4))]], 3.0)
    np.testing.assert_allclose(gram_matrix(ds, 2, 0.25), numeric_gram(ds, 2, 0.25), atol=1e-4)


def test_moment_vector_counts_earlier_events_only():
    ds = dataset([[[0.1, 0.15, 0.3]]], 1.0)
    v, V = moment_vector(ds, 2, 0.1, 0)
    # covariates at 0.1: none; at 0.15: 0.1 in bin 0; at 0.3: 0.15 in bin 1, 0.1 at lag 0.2 in bin 1
    np.testing.assert_allclose(v, [3, 1, 2])
    np.testing.assert_allclose(V, [3, 1, 4])


def test_ols_when_unpenalized():
    rng = np.random.default_rng(4)
    B = rng.normal(size=(6, 6))
    G = B @ B.T + 6 * np.eye(6)
    v = rng.normal(size=6)
    v[0] = abs(v[0]) + 10  # keep the baseline coordinate positive
    theta, ok = solve_lasso(LsSystem(G, v, np.ones(6)), 0.0)
    want = np.linalg.solve(G, v)
    assert ok and want[0] > 0
    np.testing.assert_allclose(theta, want, atol=1e-8)


def test_shrinkage_threshold():
    rng = np.random.default_rng(5)
    B = rng.normal(size=(5, 5))
    G = B @ B.T + 5 * np.eye(5)
    v = rng.normal(size=5) + np.array([20, 0, 0, 0, 0])
    mu_only = np.zeros(5)
    mu_only[0] = v[0] / G[0, 0]
    w = 2 * np.max(np.abs(v - G @ mu_only)[1:])
    theta, _ = solve_lasso(LsSystem(G, v, np.ones(5)), w * 1.0001)
    assert not np.any(theta[1:])
    theta, _ = solve_lasso(LsSystem(G, v, np.ones(5)), w * 0.99)
    assert np.any(theta[1:])


def test_scalar_soft_threshold():
    G = np.eye(2)
    theta, _ = solve_lasso(LsSystem(G, np.array([1.0, 1.0]), np.ones(2)), 1.0)
    assert theta[1] == pytest.approx(0.5)
    assert theta[0] == pytest.approx(1.0)


@pytest.fixture(scope="module")
def pw_data():
    true = PiecewiseHawkesModel([0.5, 0.5], [[[2.0, 1.0], [0.0, 0.0]], [[3.0, 1.0], [1.0, 0.5]]], 0.1)
    return true, simulate(true, SimConfig(300.0, 9, 7))


def test_kkt_and_recovery(pw_data):
    true, ds = pw_data
    fit, diag = fit_npl(ds, NplConfig(K=2, delta=0.1, lasso_weight=5.0))
    assert max(diag["kkt_residual"]) <= 1e-6
    assert np.max(np.abs(fit.alpha - true.alpha)) <= 0.3
    for j in range(2):
        sys = build_ls_system(ds, NplConfig(K=2, delta=0.1), j)
        theta = np.concatenate([[fit.mu[j]], fit.alpha[j].ravel()])
        assert kkt_residual(sys, theta, 5.0) <= 1e-6


def test_null_graph():
    ds = simulate(PiecewiseHawkesModel([0.7, 0.7], np.zeros((2, 2, 4)), 0.05), SimConfig(500.0, 9, 3))
    fit, _ = fit_npl(ds, NplConfig(K=4, delta=0.05))
    assert np.max(np.abs(fit.alpha)) <= 0.1
    assert np.max(np.abs(fit.mu - 0.7)) <= 0.1


def test_inhibition_sign():
    true = PiecewiseHawkesModel([2.0], [[[-0.4, 0.0]]], 0.1)
    ds = simulate(true, SimConfig(500.0, 9, 8))
    fit, _ = fit_npl(ds, NplConfig(K=2, delta=0.1, lasso_weight=1.0))
    assert fit.alpha[0, 0, 0] < 0


def test_refinement_invariance_on_noiseless_system(pw_data):
    true, ds = pw_data
    for K, d, alpha in ((2, 0.1, true.alpha), (4, 0.05, np.repeat(true.alpha, 2, axis=2))):
        G = gram_matrix(ds, K, d)
        adj = []
        for j in range(2):
            theta_true = np.concatenate([[true.mu[j]], alpha[j].ravel()])
            theta, _ = solve_lasso(LsSystem(G, G @ theta_true, np.ones(G.shape[0])), 0.0)
            adj.append(d * theta[1:].reshape(2, K).sum(axis=1))
        np.testing.assert_allclose(np.array(adj), adjacency(true), atol=1e-7)


def test_graph_stable_across_bin_choices():
    true = PiecewiseHawkesModel([1.0, 1.0], [[[3.0, 2.0, 1.0, 0.5], [0] * 4], [[2.0, 2.0, 1.0, 1.0], [0] * 4]], 0.05)
    ds = simulate(true, SimConfig(300.0, 9, 12))
    supports = []
    for K, d in ((4, 0.05), (8, 0.025)):
        fit, _ = fit_npl(ds, NplConfig(K=K, delta=d, lasso_weight=10.0))
        supports.append(np.abs(adjacency(fit)) > 0.05)
    np.testing.assert_array_equal(supports[0], supports[1])


def test_threads_identical(pw_data):
    _, ds = pw_data
    a, _ = fit_npl(ds, NplConfig(K=2, delta=0.1, lasso_weight=5.0), threads=1)
    b, _ = fit_npl(ds, NplConfig(K=2, delta=0.1, lasso_weight=5.0), threads=2)
    np.testing.assert_array_equal(a.alpha, b.alpha)
