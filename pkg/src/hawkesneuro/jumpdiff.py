"""Hawkes-driven jump-diffusion model of a membrane potential.

The model is ``dX = b(X) dt + sigma(X) dW + a(X-) sum_j dN_j`` where the
``N_j`` form a Hawkes process independent of ``W``.  This module simulates it
with an Euler scheme and estimates ``sigma^2``, ``g = sigma^2 + a^2 f``,
``f``, ``a^2`` and ``b`` nonparametrically from one sampled path by penalized
least-squares projection on histogram bases.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import SamplePath
from .errors import DataError, NumericalError
from .model import HawkesModel, intensity
from .simulation import simulate_trial


BLOWUP = 1e6


@dataclass(frozen=True)
class JumpDiffusionModel:
    """Coefficient functions must accept and return numpy arrays."""

    b: Callable
    sigma: Callable
    a: Callable
    driver: HawkesModel | None = None


@dataclass(frozen=True)
class EstimConfig:
    beta_trunc: float = 0.25
    kappa_sigma: float = 2.0
    kappa_g: float = 100.0
    kappa_b: float = 2.0
    dims: tuple = (4, 8, 16, 32)
    nw_bandwidth: float | str = "auto"
    g_uses_y: bool = False

    def __post_init__(self):
        if not 0 < self.beta_trunc < 0.5:
            raise DataError("truncation exponent must lie in (0, 1/2)")
        if not self.dims or any(int(d) < 1 for d in self.dims):
            raise DataError("dims must be a non-empty list of positive integers")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))


# ---------------------------------------------------------------- simulation


def event_counts(times, dt: float, n_steps: int) -> np.ndarray:
    """Number of events in each step ``(k dt, (k+1) dt]``."""
    times = np.asarray(times, dtype=float)
    idx = np.ceil(times / dt - 1e-9).astype(int) - 1
    idx = idx[(idx >= 0) & (idx < n_steps)]
    return np.bincount(idx, minlength=n_steps).astype(float)


def simulate_paths(model: JumpDiffusionModel, x0, dt: float, n_steps: int, counts, rng) -> np.ndarray:
    """Euler-Maruyama for a batch of paths, shape ``(n_paths, n_steps + 1)``.

    ``counts[p, k]`` is the number of driver events in step ``k`` of path ``p``.
    """
    x = np.array(x0, dtype=float).reshape(-1)
    n_paths = x.size
    out = np.empty((n_paths, n_steps + 1))
    out[:, 0] = x
    sq = math.sqrt(dt)
    noise = rng.standard_normal((n_steps, n_paths))
    counts = np.zeros((n_paths, n_steps)) if counts is None else np.asarray(counts, dtype=float)
    for k in range(n_steps):
        dn = counts[:, k]
        x = x + model.b(x) * dt + model.sigma(x) * sq * noise[k] + np.where(dn != 0, model.a(x) * dn, 0.0)
        if not np.all(np.abs(x) <= BLOWUP):
            bad = int(np.argmax(~(np.abs(x) <= BLOWUP)))
            raise NumericalError(f"path {bad} exceeded |X| > {BLOWUP:g} at step {k + 1} (t = {(k + 1) * dt:g})")
        out[:, k + 1] = x
    return out


def _rngs(seed: int):
    return (
        np.random.Generator(np.random.PCG64([int(seed), 0])),
        np.random.Generator(np.random.PCG64([int(seed), 1])),
    )


def simulate_path(model: JumpDiffusionModel, x0: float, dt: float, T: float, spikes="simulate", seed: int = 0):
    """Simulate one path on ``[0, T]``.

    ``spikes`` is a sequence of M event-time arrays, or ``"simulate"`` to draw
    them from ``model.driver``.  Returns ``(SamplePath, spikes)``.
    """
    if not dt > 0:
        raise DataError("dt must be positive")
    n_steps = int(round(T / dt))
    noise_rng, spike_rng = _rngs(seed)
    if isinstance(spikes, str):
        if spikes != "simulate":
            raise DataError("spikes must be event arrays or 'simulate'")
        spikes = [] if model.driver is None else simulate_trial(model.driver, T, spike_rng)
    merged = np.concatenate([np.asarray(s, dtype=float) for s in spikes]) if len(spikes) else np.zeros(0)
    counts = event_counts(merged, dt, n_steps)[None, :]
    vals = simulate_paths(model, [x0], dt, n_steps, counts, noise_rng)[0]
    return SamplePath(0.0, dt, vals), spikes


# ---------------------------------------------------------------- estimators


def increments(path: SamplePath) -> tuple[np.ndarray, np.ndarray]:
    """Normalised increments ``Y = dX / dt`` and squared increments ``Z = dX^2 / dt``."""
    d = np.diff(path.values)
    return d / path.dt, d * d / path.dt


def truncation_phi(x):
    """Smooth cutoff: 1 on ``|x| < 1``, ``exp(1/3 + 1/(x^2 - 4))`` on
    ``1 <= |x| < 2``, 0 beyond."""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.zeros(x.shape)
    out[x < 1] = 1.0
    mid = (x >= 1) & (x < 2)
    out[mid] = np.exp(1.0 / 3.0 + 1.0 / (x[mid] ** 2 - 4.0))
    return out if out.ndim else float(out)


@dataclass
class PiecewiseFunction:
    """Histogram function on ``[edges[0], edges[-1]]``; constant extrapolation
    outside.  ``mask`` flags bins holding no data (their value is 0)."""

    edges: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    counts: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def bin_index(self, x) -> np.ndarray:
        idx = np.searchsorted(self.edges, np.asarray(x, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.values.size - 1)

    def __call__(self, x):
        return self.values[self.bin_index(x)]

    def to_dict(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "values": self.values.tolist(),
            "mask": self.mask.astype(bool).tolist(),
            "counts": self.counts.astype(int).tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseFunction":
        return cls(
            np.asarray(d["edges"], float),
            np.asarray(d["values"], float),
            np.asarray(d["mask"], bool),
            np.asarray(d["counts"], float),
            dict(d.get("meta", {})),
        )


def _edges(lo: float, hi: float, D: int) -> np.ndarray:
    if not hi > lo:
        raise DataError("observed path has a degenerate range")
    return np.linspace(lo, hi, D + 1)


def _bin_means(x, r, edges):
    D = edges.size - 1
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, D - 1)
    counts = np.bincount(idx, minlength=D).astype(float)
    sums = np.bincount(idx, weights=r, minlength=D)
    mask = counts == 0
    vals = np.where(mask, 0.0, sums / np.where(mask, 1.0, counts))
    return vals, mask, counts, idx


def penalized_projection(x, r, dims, penalty: Callable[[int], float], domain=None) -> PiecewiseFunction:
    """Minimise ``mean((t(x) - r)^2) + penalty(D)`` over histogram functions
    with ``D`` equal bins on the observed range, ``D`` in ``dims``."""
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    if x.size < 2 * min(dims):
        raise DataError(f"need at least {2 * min(dims)} observations, got {x.size}")
    lo, hi = (float(x.min()), float(x.max())) if domain is None else domain
    best = None
    crit = {}
    for D in dims:
        edges = _edges(lo, hi, D)
        vals, mask, counts, idx = _bin_means(x, r, edges)
        c = float(np.mean((vals[idx] - r) ** 2)) + penalty(D)
        crit[D] = c
        if best is None or c < best[0]:
            best = (c, D, edges, vals, mask, counts)
    _, D, edges, vals, mask, counts = best
    return PiecewiseFunction(edges, vals, mask, counts, {"D": D, "criterion": crit})


def _regressors(path: SamplePath):
    return path.values[:-1]


def fit_sigma2(path: SamplePath, cfg: EstimConfig = EstimConfig(), truncate: bool = True) -> PiecewiseFunction:
    """Histogram estimate of ``sigma^2`` from truncated squared increments.

    With ``truncate=False`` the raw squared increments are projected, which
    estimates the total local variance of a model without jumps.
    """
    Y, Z = increments(path)
    n = Z.size
    if truncate:
        Z = Z * truncation_phi(np.diff(path.values) / path.dt**cfg.beta_trunc)
    return penalized_projection(_regressors(path), Z, cfg.dims, lambda D: cfg.kappa_sigma * D / n)


def fit_g(path: SamplePath, cfg: EstimConfig = EstimConfig()) -> PiecewiseFunction:
    """Histogram estimate of ``g = sigma^2 + a^2 f`` from the squared increments
    (or from ``Y`` when ``cfg.g_uses_y``)."""
    Y, Z = increments(path)
    n = Z.size
    resp = Y if cfg.g_uses_y else Z
    return penalized_projection(
        _regressors(path), resp, cfg.dims, lambda D: cfg.kappa_g * D / (n * path.dt)
    )


def silverman_bandwidth(x) -> float:
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    h = 1.06 * sd * x.size ** (-0.2)
    return h if h > 0 else 1.0


@dataclass
class NadarayaWatson:
    x: np.ndarray
    y: np.ndarray
    bandwidth: float

    def evaluate(self, q) -> tuple[np.ndarray, np.ndarray]:
        """Values and a mask of points whose weight sum is below 1e-12."""
        q = np.atleast_1d(np.asarray(q, dtype=float))
        num = np.zeros(q.size)
        den = np.zeros(q.size)
        # chunk to bound memory for long paths
        step = max(1, 2_000_000 // max(q.size, 1))
        for s in range(0, self.x.size, step):
            u = (q[:, None] - self.x[None, s : s + step]) / self.bandwidth
            w = np.exp(-0.5 * u * u)
            num += w @ self.y[s : s + step]
            den += w.sum(axis=1)
        mask = den < 1e-12
        return np.where(mask, 0.0, num / np.where(mask, 1.0, den)), mask


def summed_intensity(driver: HawkesModel, spikes, times) -> np.ndarray:
    """``sum_j lambda_j(t)`` at each time, from the observed spike history."""
    times = np.asarray(times, dtype=float)
    hist = [np.asarray(s, dtype=float) for s in spikes]
    return sum(intensity(driver, hist, j, times) for j in range(driver.n_neurons))


def fit_f(path: SamplePath, spikes, driver: HawkesModel, cfg: EstimConfig = EstimConfig()) -> NadarayaWatson:
    """Nadaraya-Watson regression of the summed driver intensity on the state.

    ``spikes`` are the M driver trains on the path's time axis.
    """
    times = path.times[:-1]
    lam = summed_intensity(driver, spikes, times)
    x = _regressors(path)
    h = silverman_bandwidth(x) if cfg.nw_bandwidth == "auto" else float(cfg.nw_bandwidth)
    return NadarayaWatson(x, lam, h)


def _common_edges(*fns: PiecewiseFunction) -> np.ndarray:
    return np.unique(np.concatenate([f.edges for f in fns]))


def derive_a2(sigma2_hat: PiecewiseFunction, g_hat: PiecewiseFunction, f_hat, x_obs=None) -> PiecewiseFunction:
    """``(g - sigma^2) / f`` on the common refinement of both partitions,
    floored at 0.  ``f_hat`` is a :class:`NadarayaWatson` or a callable."""
    edges = _common_edges(sigma2_hat, g_hat)
    centers = 0.5 * (edges[:-1] + edges[1:])
    if isinstance(f_hat, NadarayaWatson):
        fv, fmask = f_hat.evaluate(centers)
    else:
        fv = np.asarray(f_hat(centers), dtype=float)
        fmask = ~np.isfinite(fv) | (np.abs(fv) < 1e-12)
    diff = g_hat(centers) - sigma2_hat(centers)
    mask = fmask | sigma2_hat.mask[sigma2_hat.bin_index(centers)] | g_hat.mask[g_hat.bin_index(centers)]
    raw = np.where(mask, 0.0, diff / np.where(fmask, 1.0, fv))
    floored = (raw < 0) & ~mask
    vals = np.maximum(raw, 0.0)
    if x_obs is not None:
        counts = np.bincount(
            np.clip(np.searchsorted(edges, x_obs, side="right") - 1, 0, centers.size - 1), minlength=centers.size
        ).astype(float)
    else:
        counts = np.ones(centers.size)
    mask = mask | (counts == 0)
    return PiecewiseFunction(edges, vals, mask, counts, {"floored": floored.tolist()})


def jump_sign(path: SamplePath, cfg: EstimConfig = EstimConfig()) -> float:
    """Sign of the mean increment removed by the truncation."""
    d = np.diff(path.values)
    cut = 1.0 - truncation_phi(d / path.dt**cfg.beta_trunc)
    if not np.any(cut > 0):
        return 1.0
    return 1.0 if float(np.sum(d * cut)) >= 0 else -1.0


def fit_drift(path: SamplePath, spikes, a_hat, cfg: EstimConfig = EstimConfig(), jump_correction: bool = True):
    """Histogram estimate of ``b`` from ``U = Y - a(X) dN / dt``.

    ``a_hat`` is a callable; ``jump_correction=False`` uses ``U = Y``.
    """
    Y, _ = increments(path)
    n = Y.size
    x = _regressors(path)
    U = Y
    if jump_correction and spikes is not None and len(spikes):
        merged = np.concatenate([np.asarray(s, dtype=float) for s in spikes]) - path.t0
        dn = event_counts(merged, path.dt, n)
        U = Y - np.asarray(a_hat(x), dtype=float) * dn / path.dt
    return penalized_projection(x, U, cfg.dims, lambda D: cfg.kappa_b * D / (n * path.dt))


def approximate(fn: PiecewiseFunction, shape: str = "constant", values=None):
    """Weighted least-squares fit over populated bins, weights = occupancy.

    Returns ``c`` for ``"constant"`` or ``(slope, intercept)`` for ``"linear"``.
    """
    vals = fn.values if values is None else np.asarray(values, dtype=float)
    keep = ~fn.mask & (fn.counts > 0)
    x, y, w = fn.centers[keep], vals[keep], fn.counts[keep]
    if shape == "constant":
        if x.size < 1:
            raise DataError("constant approximation needs a populated bin")
        return float(np.sum(w * y) / np.sum(w))
    if shape == "linear":
        if x.size < 2:
            raise DataError("linear approximation needs two populated bins")
        xm = np.sum(w * x) / np.sum(w)
        ym = np.sum(w * y) / np.sum(w)
        sxx = np.sum(w * (x - xm) ** 2)
        slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
        return slope, float(ym - slope * xm)
    raise DataError(f"unknown approximation shape {shape!r}")


@dataclass
class FittedCoefficients:
    sigma2_hat: PiecewiseFunction
    b_hat: PiecewiseFunction
    sigma2_const: float
    b_lin: tuple
    a_lin: tuple = (0.0, 0.0)
    g_hat: PiecewiseFunction | None = None
    f_values: list | None = None
    a2_hat: PiecewiseFunction | None = None
    a_sign: float = 1.0
    jumps: bool = True

    def a_values(self) -> np.ndarray:
        return self.a_sign * np.sqrt(self.a2_hat.values)

    def approx_model(self, driver: HawkesModel | None = None) -> JumpDiffusionModel:
        """Model built from the constant / linear approximations."""
        c = max(self.sigma2_const, 0.0)
        r, s = self.b_lin
        p, q = self.a_lin if self.jumps else (0.0, 0.0)
        sd = math.sqrt(c)
        return JumpDiffusionModel(
            b=lambda x: r * x + s,
            sigma=lambda x: np.full(np.shape(x), sd),
            a=lambda x: p * x + q,
            driver=driver if self.jumps else None,
        )

    def to_dict(self) -> dict:
        d = {
            "jumps": self.jumps,
            "approximations": {
                "sigma2_constant": self.sigma2_const,
                "b_linear": list(self.b_lin),
                "a_linear": list(self.a_lin),
            },
            "a_sign": self.a_sign,
        }
        # the binned estimates are optional: regeneration only needs the approximations
        for key in ("sigma2_hat", "b_hat", "g_hat", "a2_hat"):
            fn = getattr(self, key)
            if fn is not None:
                d[key] = fn.to_dict()
        if self.a2_hat is not None:
            d["f_hat_on_a2_bins"] = self.f_values
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FittedCoefficients":
        ap = d["approximations"]

        def opt(key):
            return PiecewiseFunction.from_dict(d[key]) if key in d else None

        return cls(
            sigma2_hat=opt("sigma2_hat"),
            b_hat=opt("b_hat"),
            sigma2_const=float(ap["sigma2_constant"]),
            b_lin=tuple(ap["b_linear"]),
            a_lin=tuple(ap["a_linear"]),
            g_hat=opt("g_hat"),
            f_values=d.get("f_hat_on_a2_bins"),
            a2_hat=opt("a2_hat"),
            a_sign=float(d.get("a_sign", 1.0)),
            jumps=bool(d.get("jumps", True)),
        )


def save_coefficients(fc: FittedCoefficients, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fc.to_dict(), fh, indent=1)


def load_coefficients(path) -> FittedCoefficients:
    with open(path, encoding="utf-8") as fh:
        return FittedCoefficients.from_dict(json.load(fh))


def fit_jumpdiff(path: SamplePath, spikes, driver: HawkesModel, cfg: EstimConfig = EstimConfig()) -> FittedCoefficients:
    """Full estimation chain: sigma^2, g, f, a^2 (with sign), then b, plus the
    constant / linear approximations used for regeneration."""
    x = _regressors(path)
    s2 = fit_sigma2(path, cfg)
    g = fit_g(path, cfg)
    f = fit_f(path, spikes, driver, cfg)
    a2 = derive_a2(s2, g, f, x_obs=x)
    sign = jump_sign(path, cfg)
    a_vals = sign * np.sqrt(a2.values)
    a_fn = PiecewiseFunction(a2.edges, a_vals, a2.mask, a2.counts)
    a_lin = approximate(a_fn, "linear") if np.count_nonzero(~a2.mask) >= 2 else (0.0, approximate(a_fn, "constant"))
    p, q = a_lin

    def a_hat(z):
        idx = a_fn.bin_index(z)
        return np.where(a_fn.mask[idx], p * z + q, a_fn.values[idx])

    b = fit_drift(path, spikes, a_hat, cfg)
    return FittedCoefficients(
        sigma2_hat=s2,
        b_hat=b,
        sigma2_const=approximate(s2, "constant"),
        b_lin=approximate(b, "linear"),
        a_lin=a_lin,
        g_hat=g,
        f_values=f.evaluate(a2.centers)[0].tolist(),
        a2_hat=a2,
        a_sign=sign,
        jumps=True,
    )


def fit_diffusion(path: SamplePath, cfg: EstimConfig = EstimConfig()) -> FittedCoefficients:
    """Jump-free comparator: no truncation and no jump correction."""
    s2 = fit_sigma2(path, cfg, truncate=False)
    b = fit_drift(path, None, None, cfg, jump_correction=False)
    return FittedCoefficients(
        sigma2_hat=s2,
        b_hat=b,
        sigma2_const=approximate(s2, "constant"),
        b_lin=approximate(b, "linear"),
        jumps=False,
    )


def regenerate(
    fitted: FittedCoefficients,
    driver: HawkesModel | None,
    T: float = 13.0,
    dt: float = 1e-3,
    x0=(-55.0, -35.0),
    seed: int = 0,
    n_paths: int = 1,
) -> list:
    """Simulate ``n_paths`` paths from the approximated coefficients.

    ``x0`` is a number or a ``(low, high)`` range for a uniform draw.  Driver
    spikes are simulated afresh for every path.
    """
    model = fitted.approx_model(driver)
    n_steps = int(round(T / dt))
    noise_rng, spike_rng = _rngs(seed)
    if np.ndim(x0) == 0:
        starts = np.full(n_paths, float(x0))
    else:
        lo, hi = x0
        starts = noise_rng.uniform(lo, hi, size=n_paths)
    counts = np.zeros((n_paths, n_steps))
    if model.driver is not None:
        for p in range(n_paths):
            trains = simulate_trial(model.driver, T, spike_rng)
            merged = np.concatenate(trains) if trains else np.zeros(0)
            counts[p] = event_counts(merged, dt, n_steps)
    vals = simulate_paths(model, starts, dt, n_steps, counts, noise_rng)
    return [SamplePath(0.0, dt, v) for v in vals]
