"""Least-squares LASSO estimation of piecewise-constant Hawkes kernels.

For target neuron ``j`` the coefficients ``theta = (mu_j, alpha[j, l, k])``
minimise ``theta' G theta - 2 theta' v + w * sum_{kernel coords} |theta_i|``
where ``G`` integrates products of the covariates

    c_0(t) = 1,   c_{l,k}(t) = #{events s of l : t - s in (k delta, (k+1) delta]}

over every trial and ``v`` sums the covariates at the events of ``j``.  The
covariates are piecewise constant in ``t``, so ``G`` is integrated exactly
between breakpoints.  Coefficients are signed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SpikeDataset
from .errors import DataError
from .model import PiecewiseHawkesModel
from .parallel import pmap


@dataclass(frozen=True)
class NplConfig:
    K: int = 8
    delta: float = 0.025
    lasso_weight: float | None = None
    tol: float = 1e-12
    max_sweeps: int = 100_000
    gamma: float = 1.0

    def __post_init__(self):
        if self.K < 1 or not self.delta > 0:
            raise DataError("NPL needs K >= 1 and delta > 0")
        if self.lasso_weight is not None and self.lasso_weight < 0:
            raise DataError("lasso weight must be >= 0")


@dataclass
class LsSystem:
    G: np.ndarray
    v: np.ndarray
    V: np.ndarray  # sum of squared covariates at the target's events

    @property
    def size(self) -> int:
        return self.v.size


def covariates(trial, t: np.ndarray, K: int, delta: float) -> np.ndarray:
    """Covariate rows ``c(t)`` for the given trial, shape ``(len(t), 1 + M K)``."""
    cols = [np.ones(t.size)]
    for src in trial:
        for k in range(K):
            hi = np.searchsorted(src, t - k * delta, side="left")
            lo = np.searchsorted(src, t - (k + 1) * delta, side="left")
            cols.append((hi - lo).astype(float))
    return np.column_stack(cols)


def gram_matrix(data: SpikeDataset, K: int, delta: float) -> np.ndarray:
    T = data.t_max
    p = 1 + data.n_neurons * K
    G = np.zeros((p, p))
    shifts = delta * np.arange(K + 1)
    for trial in data.trains:
        pts = [np.array([0.0, T])] + [(src[:, None] + shifts).ravel() for src in trial]
        bp = np.unique(np.concatenate(pts))
        bp = bp[(bp >= 0.0) & (bp <= T)]
        mids = 0.5 * (bp[:-1] + bp[1:])
        X = covariates(trial, mids, K, delta)
        G += (X * np.diff(bp)[:, None]).T @ X
    return G


def moment_vector(data: SpikeDataset, K: int, delta: float, j: int):
    p = 1 + data.n_neurons * K
    v = np.zeros(p)
    V = np.zeros(p)
    for trial in data.trains:
        ev = trial[j]
        if ev.size == 0:
            continue
        # c is left-continuous at an event: the event itself never counts
        X = covariates(trial, ev, K, delta)
        v += X.sum(axis=0)
        V += (X**2).sum(axis=0)
    return v, V


def build_ls_system(data: SpikeDataset, cfg: NplConfig, j: int, G: np.ndarray | None = None) -> LsSystem:
    if cfg.K * cfg.delta >= data.t_max:
        raise DataError("kernel support K*delta must be shorter than the window")
    if G is None:
        G = gram_matrix(data, cfg.K, cfg.delta)
    v, V = moment_vector(data, cfg.K, cfg.delta, j)
    return LsSystem(G, v, V)


def _polish(G, v, theta, w):
    """Solve the KKT equations on the current active set; keep the result only
    if it is self-consistent."""
    p = v.size
    active = np.flatnonzero(theta != 0)
    if active.size == 0:
        return theta
    s = np.sign(theta[active])
    pen = np.where(active == 0, 0.0, s * w / 2.0)
    try:
        sol = np.linalg.solve(G[np.ix_(active, active)], v[active] - pen)
    except np.linalg.LinAlgError:
        return theta
    cand = np.zeros(p)
    cand[active] = sol
    kernel = active != 0
    if np.any(np.sign(sol[kernel]) != s[kernel]) or (0 in active and sol[0] < 0):
        return theta
    grad = 2.0 * (G @ cand - v)
    inactive = np.setdiff1d(np.arange(1, p), active)
    if inactive.size and np.max(np.abs(grad[inactive])) > w + 1e-9 * max(1.0, w):
        return theta
    return cand


def solve_lasso(sys: LsSystem, lasso_weight: float, tol: float = 1e-12, max_sweeps: int = 100_000):
    """Cyclic coordinate descent; coordinate 0 (the baseline) is unpenalized
    and clamped at 0.

    Returns ``(theta, converged)``.
    """
    G, v = sys.G, sys.v
    w = float(lasso_weight)
    p = v.size
    theta = np.zeros(p)
    r = v.copy()  # r = v - G theta
    diag = np.diag(G).copy()
    converged = False
    for _ in range(max_sweeps):
        biggest = 0.0
        for i in range(p):
            if diag[i] <= 0.0:
                continue
            z = r[i] + diag[i] * theta[i]
            if i == 0:
                new = max(z / diag[i], 0.0)
            else:
                new = math.copysign(max(abs(z) - w / 2.0, 0.0), z) / diag[i]
            d = new - theta[i]
            if d != 0.0:
                r -= G[:, i] * d
                theta[i] = new
                biggest = max(biggest, abs(d))
        if biggest < tol:
            converged = True
            break
    return _polish(G, v, theta, w), converged


def kkt_residual(sys: LsSystem, theta: np.ndarray, lasso_weight: float) -> float:
    """Largest violation of the LASSO optimality conditions."""
    grad = 2.0 * (sys.G @ theta - sys.v)
    w = lasso_weight
    res = 0.0
    for i in range(theta.size):
        if sys.G[i, i] <= 0.0:
            continue
        if i == 0:
            res = max(res, abs(grad[0]) if theta[0] > 0 else max(0.0, -grad[0]))
        elif theta[i] != 0.0:
            res = max(res, abs(grad[i] + w * np.sign(theta[i])))
        else:
            res = max(res, max(0.0, abs(grad[i]) - w))
    return res


def default_weight(sys: LsSystem, gamma: float = 1.0) -> float:
    """Data-driven weight ``2 sqrt(2 gamma log(p) max_i V_i)``, where ``V_i``
    estimates the variance of the score of coordinate ``i``."""
    p = sys.size
    return 2.0 * math.sqrt(2.0 * gamma * math.log(max(p, 2)) * float(np.max(sys.V[1:], initial=0.0)))


def fit_npl(data: SpikeDataset, cfg: NplConfig = NplConfig(), threads=None):
    """Fit a :class:`PiecewiseHawkesModel`; returns ``(model, diagnostics)``."""
    if cfg.K * cfg.delta >= data.t_max:
        raise DataError("kernel support K*delta must be shorter than the window")
    m, K = data.n_neurons, cfg.K
    G = gram_matrix(data, K, cfg.delta)

    def one(j):
        sys = build_ls_system(data, cfg, j, G)
        w = default_weight(sys, cfg.gamma) if cfg.lasso_weight is None else cfg.lasso_weight
        theta, ok = solve_lasso(sys, w, cfg.tol, cfg.max_sweeps)
        contrast = float(theta @ G @ theta - 2.0 * theta @ sys.v)
        return theta, ok, w, contrast, kkt_residual(sys, theta, w)

    out = pmap(one, range(m), threads)
    mu = np.array([o[0][0] for o in out])
    alpha = np.stack([o[0][1:].reshape(m, K) for o in out])
    model = PiecewiseHawkesModel(mu, alpha, cfg.delta)
    diag = {
        "lasso_weight": [o[2] for o in out],
        "converged": all(o[1] for o in out),
        "contrast": [o[3] for o in out],
        "kkt_residual": [o[4] for o in out],
        "sparsity": [float(np.mean(o[0][1:] != 0)) for o in out],
    }
    return model, diag
