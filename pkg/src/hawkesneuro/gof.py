"""Goodness-of-fit test of a fitted Hawkes model by time rescaling, trial
subsampling and a Kolmogorov-Smirnov statistic on the cumulated process."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import SpikeDataset
from .errors import DataError, NumericalError
from .model import HawkesModel, compensator
from .parallel import pmap


@dataclass(frozen=True)
class GofConfig:
    alpha: float = 0.05
    theta: float | str = "auto"
    n_subsamples: int = 100
    rng_seed: int = 0
    theta_fraction: float = 0.9

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DataError("alpha must lie in (0, 1)")
        if self.n_subsamples < 1:
            raise DataError("need at least one subsample")
        if self.theta != "auto" and not float(self.theta) > 0:
            raise DataError("theta must be positive or 'auto'")


@dataclass
class NeuronResult:
    acceptance_rate: float
    Z: list
    theta: list
    n_points: list
    degenerate: int


@dataclass
class GofReport:
    alpha: float
    p_n: int
    quantile: float
    quantile_finite: float
    neurons: list = field(default_factory=list)

    @property
    def acceptance_rates(self) -> np.ndarray:
        return np.array([r.acceptance_rate for r in self.neurons])

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "p_n": self.p_n,
            "quantile": self.quantile,
            "quantile_finite": self.quantile_finite,
            "neurons": [vars(r) for r in self.neurons],
        }


def subsample_size(n: int) -> int:
    """``floor(n ** (2/3))`` computed exactly in integers."""
    if n < 1:
        raise DataError("need at least one trial")
    p = int(round(n ** (2.0 / 3.0)))
    while p**3 > n * n:
        p -= 1
    while (p + 1) ** 3 <= n * n:
        p += 1
    return p


def kolmogorov_cdf(x: float, terms: int = 100) -> float:
    """``P(sup |B| <= x)`` for a Brownian bridge ``B``."""
    if x <= 0:
        return 0.0
    k = np.arange(1, terms + 1)
    return float(1.0 - 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k**2 * x * x)))


def quantile(alpha: float, p_n: int = 1, tol: float = 1e-9) -> tuple[float, float]:
    """Asymptotic Kolmogorov quantile ``q_{1-alpha}`` by bisection, and the
    finite-sample quantile for ``p_n`` implied by Stephens' correction
    ``q = (sqrt(p) + 0.12 + 0.11 / sqrt(p)) * q_p``."""
    if not 0 < alpha < 1 or p_n < 1:
        raise DataError("quantile needs alpha in (0, 1) and p_n >= 1")
    lo, hi = 1e-3, 10.0
    target = 1.0 - alpha
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if kolmogorov_cdf(mid) < target:
            lo = mid
        else:
            hi = mid
    q = 0.5 * (lo + hi)
    r = math.sqrt(p_n)
    return q, q / (r + 0.12 + 0.11 / r)


def rescale_trial(model: HawkesModel, data: SpikeDataset, i: int, j: int) -> tuple[np.ndarray, float]:
    """Compensator of neuron ``j`` at its own events in trial ``i``, and at ``t_max``."""
    history = data.trains[i]
    ev = history[j]
    pts = compensator(model, history, j, np.append(ev, data.t_max))
    out, budget = pts[:-1], float(pts[-1])
    if out.size > 1 and np.any(np.diff(out) <= 0):
        raise NumericalError(f"rescaled times are not increasing (trial {i}, neuron {j})")
    return out, budget


def cumulate(rescaled, budgets) -> np.ndarray:
    """Concatenate per-trial rescaled points, shifting trial ``i`` by the
    budgets of the trials before it."""
    offsets = np.concatenate([[0.0], np.cumsum(budgets)[:-1]])
    parts = [np.asarray(r, dtype=float) + o for r, o in zip(rescaled, offsets)]
    return np.concatenate(parts) if parts else np.zeros(0)


def ks_statistic(points, budget: float) -> tuple[float, int, bool]:
    """``sqrt(N) sup_u |F_N(u) - u|`` for the points below ``budget`` mapped to
    ``[0, 1]``.  Returns ``(Z, N, degenerate)``; ``Z = 0`` when ``N = 0``."""
    x = np.sort(np.asarray(points, dtype=float))
    u = x[x <= budget] / budget
    n = u.size
    if n == 0:
        return 0.0, 0, True
    i = np.arange(1, n + 1)
    d = max(float(np.max(i / n - u)), float(np.max(u - (i - 1) / n)))
    return math.sqrt(n) * d, n, False


def _draw(seed: int, d: int, n: int, p: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64([int(seed), int(d)]))
    return np.sort(rng.choice(n, size=p, replace=False))


def run_gof(
    model: HawkesModel,
    data: SpikeDataset,
    cfg: GofConfig = GofConfig(),
    refit: Callable[[SpikeDataset], HawkesModel] | None = None,
    threads: int | None = None,
) -> GofReport:
    """Repeat the subsampled test ``cfg.n_subsamples`` times per neuron.

    With ``refit`` given, each draw fits a model on the complementary trials
    and tests on the subsample (hold-out variant); otherwise ``model``, fitted
    on all trials, is used throughout.
    """
    n, m = data.n_trials, data.n_neurons
    if model.n_neurons != m:
        raise DataError("model and data have different numbers of neurons")
    p = subsample_size(n)
    q, q_fin = quantile(cfg.alpha, p)
    draws = [_draw(cfg.rng_seed, d, n, p) for d in range(cfg.n_subsamples)]

    if refit is None:
        table = pmap(lambda i: [rescale_trial(model, data, i, j) for j in range(m)], range(n), threads)

        def per_draw(S):
            return [[table[i][j] for i in S] for j in range(m)]
    else:
        if p >= n:
            raise DataError("hold-out mode needs more trials than the subsample size")

        def per_draw(S):
            rest = [i for i in range(n) if i not in set(S)]
            fitted = refit(data.select_trials(rest))
            return [[rescale_trial(fitted, data, i, j) for i in S] for j in range(m)]

    rescaled = pmap(per_draw, draws, threads)
    report = GofReport(cfg.alpha, p, q, q_fin)
    for j in range(m):
        zs, thetas, counts, degenerate, accepted = [], [], [], 0, 0
        for d in range(cfg.n_subsamples):
            pairs = rescaled[d][j]
            budgets = [b for _, b in pairs]
            pts = cumulate([r for r, _ in pairs], budgets)
            bound = sum(budgets) / p
            theta = cfg.theta_fraction * bound if cfg.theta == "auto" else float(cfg.theta)
            z, n_pts, degen = ks_statistic(pts, p * theta)
            degenerate += degen
            accepted += z <= q
            zs.append(z)
            thetas.append(theta)
            counts.append(n_pts)
        report.neurons.append(NeuronResult(accepted / cfg.n_subsamples, zs, thetas, counts, degenerate))
    return report
