"""Multivariate linear Hawkes models with exponential or piecewise-constant kernels.

Conventions: ``A[j, l]`` is the integral of the kernel describing the effect of
an event of neuron ``l`` on the intensity of neuron ``j``.  Exponential kernels
share one decay rate, ``h_jl(t) = A[j, l] * beta * exp(-beta t)``.  Piecewise
kernels are ``g_jl(t) = alpha[j, l, k]`` for ``t`` in ``(k*delta, (k+1)*delta]``
(0-based ``k``), and may be signed; wherever an intensity is integrated or
simulated, its positive part is used.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError


def _ro(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ExpHawkesModel:
    mu: np.ndarray
    A: np.ndarray
    beta: float

    def __post_init__(self):
        mu, A = _ro(self.mu), _ro(self.A)
        if mu.ndim != 1 or A.shape != (mu.size, mu.size):
            raise DataError("mu must have length M and A shape (M, M)")
        if np.any(mu < 0) or np.any(A < 0) or not self.beta > 0:
            raise DataError("exponential model needs mu >= 0, A >= 0, beta > 0")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_neurons(self) -> int:
        return self.mu.size

    @property
    def support(self) -> float:
        return math.inf

    def kernel(self, j: int, l: int, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.where(t > 0, self.A[j, l] * self.beta * np.exp(-self.beta * np.maximum(t, 0)), 0.0)


@dataclass(frozen=True, eq=False)
class PiecewiseHawkesModel:
    mu: np.ndarray
    alpha: np.ndarray
    delta: float

    def __post_init__(self):
        mu, alpha = _ro(self.mu), _ro(self.alpha)
        m = mu.size
        if mu.ndim != 1 or alpha.ndim != 3 or alpha.shape[:2] != (m, m) or alpha.shape[2] < 1:
            raise DataError("mu must have length M and alpha shape (M, M, K)")
        if np.any(mu < 0) or not self.delta > 0:
            raise DataError("piecewise model needs mu >= 0 and delta > 0")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def n_neurons(self) -> int:
        return self.mu.size

    @property
    def K(self) -> int:
        return self.alpha.shape[2]

    @property
    def support(self) -> float:
        return self.K * self.delta

    @property
    def is_signed(self) -> bool:
        return bool(np.any(self.alpha < 0))

    def kernel(self, j: int, l: int, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.ceil(t / self.delta).astype(int) - 1
        inside = (t > 0) & (k < self.K)
        return np.where(inside, self.alpha[j, l][np.clip(k, 0, self.K - 1)], 0.0)


HawkesModel = ExpHawkesModel | PiecewiseHawkesModel


def _check_neuron(model, j):
    if not 0 <= j < model.n_neurons:
        raise DataError(f"neuron index {j} out of range for M={model.n_neurons}")


def decay_sums(src: np.ndarray, query: np.ndarray, beta: float) -> np.ndarray:
    """``sum_{s in src, s < t} exp(-beta (t - s))`` for each ``t`` in ``query``.

    ``src`` must be sorted; ``query`` may be in any order.
    """
    src = np.asarray(src, dtype=float)
    query = np.asarray(query, dtype=float)
    if src.size == 0:
        return np.zeros(query.shape)
    # running sums c[k] = sum_{i<=k} exp(-beta (s_k - s_i))
    c = np.empty(src.size)
    acc, prev = 0.0, src[0]
    for k, s in enumerate(src.tolist()):
        acc = 1.0 + acc * math.exp(-beta * (s - prev))
        c[k] = acc
        prev = s
    idx = np.searchsorted(src, query, side="left") - 1
    safe = np.maximum(idx, 0)
    out = c[safe] * np.exp(-beta * (query - src[safe]))
    return np.where(idx >= 0, out, 0.0)


def _piecewise_raw(model: PiecewiseHawkesModel, history, j: int, t: np.ndarray) -> np.ndarray:
    lam = np.full(t.shape, model.mu[j])
    d = model.delta
    for l, src in enumerate(history):
        src = np.asarray(src, dtype=float)
        if src.size == 0:
            continue
        for k in range(model.K):
            a = model.alpha[j, l, k]
            if a == 0.0:
                continue
            # events with t - s in (k d, (k+1) d]  <=>  s in [t-(k+1)d, t-k d)
            hi = np.searchsorted(src, t - k * d, side="left")
            lo = np.searchsorted(src, t - (k + 1) * d, side="left")
            lam = lam + a * (hi - lo)
    return lam


def intensity(model: HawkesModel, history, j: int, t) -> np.ndarray:
    """Conditional intensity of neuron ``j`` at time(s) ``t``.

    ``history`` is a sequence of M sorted arrays; only events strictly before
    each ``t`` contribute, which gives the left-continuous version.  The raw
    linear sum is returned, so signed piecewise models may yield negative
    values.
    """
    _check_neuron(model, j)
    t = np.asarray(t, dtype=float)
    if isinstance(model, ExpHawkesModel):
        lam = np.full(t.shape, model.mu[j])
        for l, src in enumerate(history):
            if model.A[j, l] != 0.0:
                lam = lam + model.A[j, l] * model.beta * decay_sums(src, t, model.beta)
        return lam
    return _piecewise_raw(model, history, j, t)


def intensity_at(model: HawkesModel, history, t: float, j: int) -> float:
    return float(intensity(model, history, j, np.array([t]))[0])


def _piecewise_mass(model: PiecewiseHawkesModel, j: int, l: int, u: np.ndarray) -> np.ndarray:
    """Integral of the kernel g_jl from 0 to u."""
    d = model.delta
    edges = d * np.arange(model.K)
    part = np.clip(u[..., None] - edges, 0.0, d)
    return part @ model.alpha[j, l]


def compensator(model: HawkesModel, history, j: int, t) -> np.ndarray:
    """Integrated intensity of neuron ``j`` from 0 to each time in ``t``.

    Exponential and non-negative piecewise models use closed forms.  Signed
    piecewise models integrate ``max(lambda, 0)`` exactly over the breakpoints
    where the intensity changes.
    """
    _check_neuron(model, j)
    t = np.asarray(t, dtype=float)
    out = model.mu[j] * t
    if isinstance(model, ExpHawkesModel):
        b = model.beta
        for l, src in enumerate(history):
            a = model.A[j, l]
            src = np.asarray(src, dtype=float)
            if a == 0.0 or src.size == 0:
                continue
            n_before = np.searchsorted(src, t, side="left")
            out = out + a * (n_before - decay_sums(src, t, b))
        return out
    if not np.any(model.alpha[j] < 0):
        for l, src in enumerate(history):
            src = np.asarray(src, dtype=float)
            if src.size == 0:
                continue
            lag = t[..., None] - src
            out = out + np.where(lag > 0, _piecewise_mass(model, j, l, np.maximum(lag, 0.0)), 0.0).sum(-1)
        return out
    return _clamped_compensator(model, history, j, t)


def _clamped_compensator(model: PiecewiseHawkesModel, history, j: int, t: np.ndarray) -> np.ndarray:
    flat = np.atleast_1d(t).ravel()
    t_hi = float(flat.max()) if flat.size else 0.0
    d = model.delta
    pts = [np.array([0.0, t_hi]), flat]
    for src in history:
        src = np.asarray(src, dtype=float)
        pts.append((src[:, None] + d * np.arange(model.K + 1)).ravel())
    bp = np.unique(np.concatenate(pts))
    bp = bp[(bp >= 0.0) & (bp <= t_hi)]
    if bp.size < 2:
        return np.zeros(t.shape)
    mids = 0.5 * (bp[:-1] + bp[1:])
    lam = np.maximum(_piecewise_raw(model, history, j, mids), 0.0)
    cum = np.concatenate([[0.0], np.cumsum(lam * np.diff(bp))])
    pos = np.searchsorted(bp, flat)
    return cum[pos].reshape(t.shape)


def adjacency(model: HawkesModel) -> np.ndarray:
    """Matrix of kernel integrals."""
    if isinstance(model, ExpHawkesModel):
        return np.array(model.A)
    return model.delta * model.alpha.sum(axis=2)


def _acyclic(G: np.ndarray) -> bool:
    """True when the directed graph with adjacency ``G`` has no cycle."""
    alive = np.ones(G.shape[0], dtype=bool)
    while alive.any():
        sinks = alive & ~np.any(G[:, alive], axis=1)
        if not sinks.any():
            return False
        alive &= ~sinks
    return True


def spectral_radius(adj, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest eigenvalue modulus of ``|adj|`` by power iteration.

    For a non-negative matrix this eigenvalue is real and non-negative
    (Perron-Frobenius).  Iterating on ``B + I`` instead of ``B`` removes the
    oscillation that a periodic matrix such as ``[[0, x], [x, 0]]`` would
    otherwise cause, and the shift is subtracted at the end.  A matrix whose
    graph has no cycle is nilpotent and returns 0 directly; the shifted
    iteration would only converge algebraically on it.
    """
    B = np.abs(np.asarray(adj, dtype=float))
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise DataError("spectral radius needs a square matrix")
    if not np.any(B) or _acyclic(B > 0):
        return 0.0
    C = B + np.eye(B.shape[0])
    x = np.ones(B.shape[0]) / math.sqrt(B.shape[0])
    est = 0.0
    for _ in range(max_iter):
        y = C @ x
        new = float(np.linalg.norm(y))
        y /= new
        if abs(new - est) <= tol * new:
            return new - 1.0
        x, est = y, new
    raise NumericalError("power iteration did not converge")


def model_to_dict(model: HawkesModel) -> dict:
    if isinstance(model, ExpHawkesModel):
        return {"type": "exponential", "mu": model.mu.tolist(), "beta": model.beta, "A": model.A.tolist()}
    return {
        "type": "piecewise",
        "mu": model.mu.tolist(),
        "delta": model.delta,
        "K": model.K,
        "alpha": model.alpha.tolist(),
    }


def model_from_dict(doc: dict) -> HawkesModel:
    try:
        kind = doc["type"]
        if kind == "exponential":
            return ExpHawkesModel(doc["mu"], doc["A"], doc["beta"])
        if kind == "piecewise":
            alpha = np.asarray(doc["alpha"], dtype=float)
            if alpha.shape[2] != int(doc["K"]):
                raise DataError("alpha does not have K bins")
            return PiecewiseHawkesModel(doc["mu"], alpha, doc["delta"])
    except (KeyError, TypeError, IndexError) as exc:
        raise DataError(f"malformed model document: {exc}") from exc
    raise DataError(f"unknown model type {kind!r}")


def save_model(model: HawkesModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)


def load_model(path) -> HawkesModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
