"""Ogata thinning for multivariate Hawkes processes.

Random numbers come from numpy's ``PCG64`` bit generator; trial ``i`` is
seeded with ``seed + i`` so trials can be generated independently.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import SpikeDataset
from .errors import DataError, NumericalError
from .model import ExpHawkesModel, HawkesModel, PiecewiseHawkesModel, spectral_radius
from .parallel import pmap


@dataclass(frozen=True)
class SimConfig:
    horizon: float = 13.0
    n_trials: int = 9
    rng_seed: int = 0
    max_events: int = 10_000_000

    def __post_init__(self):
        if not self.horizon > 0 or self.n_trials < 1:
            raise DataError("simulation needs horizon > 0 and n_trials >= 1")


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) + int(trial)))


def _simulate_exp(model: ExpHawkesModel, T: float, rng, max_events: int):
    mu = model.mu
    beta = model.beta
    jump = beta * model.A  # column l is added after an event of neuron l
    mu_total = float(mu.sum())
    m = mu.size
    excite = np.zeros(m)
    t = 0.0
    times, labels = [], []
    while True:
        # intensity only decays between events, so its current value bounds it
        bound = mu_total + float(excite.sum())
        if bound <= 0.0:
            break
        w = rng.exponential(1.0 / bound)
        t += w
        if t > T:
            break
        excite *= math.exp(-beta * w)
        lam = mu + excite
        u = rng.uniform() * bound
        cum = np.cumsum(lam)
        if u < cum[-1]:
            j = min(int(np.searchsorted(cum, u, side="right")), m - 1)
            times.append(t)
            labels.append(j)
            excite += jump[:, j]
            if len(times) > max_events:
                raise NumericalError(f"simulation exceeded {max_events} events; model is likely unstable")
    return np.asarray(times), np.asarray(labels, dtype=int)


def _simulate_piecewise(model: PiecewiseHawkesModel, T: float, rng, max_events: int):
    mu = model.mu
    alpha = model.alpha
    d, K = model.delta, model.K
    support = K * d
    pos_max = np.maximum(alpha, 0.0).max(axis=2)  # (M, M)
    mu_total = float(mu.sum())
    m = mu.size
    act_t: list[float] = []
    act_l: list[int] = []
    t = 0.0
    times, labels = [], []
    while True:
        # drop events whose kernels have expired
        while act_t and t - act_t[0] >= support:
            act_t.pop(0)
            act_l.pop(0)
        # positive parts of every still-active kernel bound the future intensity
        bound = mu_total + float(pos_max[:, act_l].sum()) if act_l else mu_total
        if bound <= 0.0:
            if not act_t:
                break
            t = act_t[0] + support
            continue
        w = rng.exponential(1.0 / bound)
        t += w
        if t > T:
            break
        lam = mu.copy()
        if act_t:
            lag = t - np.asarray(act_t)
            ls = np.asarray(act_l)
            live = lag <= support
            if np.any(live):
                k = np.ceil(lag[live] / d).astype(int) - 1
                k = np.clip(k, 0, K - 1)
                lam += alpha[:, ls[live], k].sum(axis=1)
        lam = np.maximum(lam, 0.0)
        u = rng.uniform() * bound
        cum = np.cumsum(lam)
        if u < cum[-1]:
            j = min(int(np.searchsorted(cum, u, side="right")), m - 1)
            times.append(t)
            labels.append(j)
            act_t.append(t)
            act_l.append(j)
            if len(times) > max_events:
                raise NumericalError(f"simulation exceeded {max_events} events; model is likely unstable")
    return np.asarray(times), np.asarray(labels, dtype=int)


def simulate_trial(model: HawkesModel, horizon: float, rng, max_events: int = 10_000_000) -> list:
    """One realisation on ``[0, horizon]`` as a list of M sorted arrays."""
    if isinstance(model, ExpHawkesModel):
        times, labels = _simulate_exp(model, horizon, rng, max_events)
    else:
        times, labels = _simulate_piecewise(model, horizon, rng, max_events)
    return [times[labels == j] for j in range(model.n_neurons)]


def simulate(model: HawkesModel, cfg: SimConfig, threads: int | None = None) -> SpikeDataset:
    """Simulate ``cfg.n_trials`` independent trials of ``model`` on ``[0, cfg.horizon]``."""
    if isinstance(model, ExpHawkesModel):
        radius = spectral_radius(model.A)
    else:
        radius = spectral_radius(model.delta * np.maximum(model.alpha, 0.0).sum(axis=2))
    if radius >= 1.0:
        warnings.warn(f"spectral radius {radius:.3f} >= 1: the process may explode", RuntimeWarning)

    def run(i):
        return simulate_trial(model, cfg.horizon, trial_rng(cfg.rng_seed, i), cfg.max_events)

    trains = pmap(run, range(cfg.n_trials), threads)
    return SpikeDataset(trains, cfg.horizon)
