import math
import warnings

import numpy as np
import pytest
from scipy import stats

from hawkesneuro.errors import NumericalError
from hawkesneuro.model import ExpHawkesModel, PiecewiseHawkesModel, compensator
from hawkesneuro.simulation import SimConfig, simulate, simulate_trial, trial_rng


def test_poisson_count():
    m = ExpHawkesModel([0.7], [[0.0]], 1.0)
    ds = simulate(m, SimConfig(1000.0, 1, 11))
    assert abs(ds.total_events() - 700) <= 3 * math.sqrt(700)


def test_stationary_rate_univariate():
    m = ExpHawkesModel([0.5], [[0.5]], 4.0)
    ds = simulate(m, SimConfig(5000.0, 1, 5))
    assert abs(ds.total_events() - 5000) <= 0.05 * 5000


def test_bitwise_determinism():
    m = ExpHawkesModel([0.5, 0.3], [[0.2, 0.1], [0.3, 0.0]], 2.0)
    a = simulate(m, SimConfig(50.0, 3, 9))
    b = simulate(m, SimConfig(50.0, 3, 9), threads=3)
    for ra, rb in zip(a.trains, b.trains):
        for x, y in zip(ra, rb):
            assert x.tobytes() == y.tobytes()


def test_trial_seed_scheme():
    m = ExpHawkesModel([1.0], [[0.2]], 2.0)
    ds = simulate(m, SimConfig(20.0, 3, 100))
    alone = simulate_trial(m, 20.0, trial_rng(102, 0))
    np.testing.assert_array_equal(ds.trains[2][0], alone[0])


def test_superposition_is_poisson():
    m = ExpHawkesModel([0.3, 0.5, 0.2], np.zeros((3, 3)), 1.0)
    ds = simulate(m, SimConfig(2000.0, 1, 4))
    merged = np.sort(np.concatenate(ds.trains[0]))
    assert abs(merged.size - 2000) <= 3 * math.sqrt(2000)
    assert stats.kstest(np.diff(merged), "expon", args=(0, 1.0)).pvalue > 0.001


def test_unstable_model_warns_and_caps():
    m = ExpHawkesModel([1.0], [[1.0]], 5.0)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        with pytest.raises(NumericalError):
            simulate(m, SimConfig(1e6, 1, 0, max_events=2000))
    assert any("spectral radius" in str(w.message) for w in rec)


def test_inhibition_clamped():
    # a strongly inhibiting kernel never makes the process fail, and
    # suppresses events right after each spike
    m = PiecewiseHawkesModel([2.0], [[[-5.0, 0.0]]], 0.2)
    ds = simulate(m, SimConfig(500.0, 1, 3))
    gaps = np.diff(ds.trains[0][0])
    assert gaps.size > 100 and np.all(gaps > 0.2)


def rescaled_gaps(model, trial):
    gaps = []
    for j, ev in enumerate(trial):
        if ev.size > 1:
            gaps.append(np.diff(compensator(model, trial, j, ev)))
    return np.concatenate(gaps)


@pytest.mark.parametrize(
    "model",
    [
        ExpHawkesModel([0.5, 0.5], [[0.3, 0.1], [0.4, 0.2]], 3.0),
        PiecewiseHawkesModel([0.5, 0.5], [[[2.0, 1.0], [0.0, 0.0]], [[3.0, 1.0], [1.0, 0.5]]], 0.1),
    ],
    ids=["exponential", "piecewise"],
)
def test_time_rescaling_passes_ks(model):
    passed = 0
    for seed in range(100):
        trial = simulate_trial(model, 100.0, trial_rng(seed, 0))
        passed += stats.kstest(rescaled_gaps(model, trial), "expon").pvalue > 0.01
    assert passed >= 95
