"""Graph-level summaries of fitted connectivity and simple spike statistics."""
from __future__ import annotations

import math

import numpy as np

from .core import SpikeDataset
from .errors import DataError, NumericalError


def sparsity_fraction(adj, eps: float = 0.0) -> float:
    """Percentage of entries with ``|a| > eps``."""
    if eps < 0:
        raise DataError("eps must be >= 0")
    A = np.asarray(adj, dtype=float)
    return 100.0 * float(np.count_nonzero(np.abs(A) > eps)) / A.size


def spectral_norm(A, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on ``A^T A``."""
    A = np.asarray(A, dtype=float)
    if not np.any(A):
        return 0.0
    B = A.T @ A
    # start from the row-norm profile; a constant start can be orthogonal to
    # the top singular vector
    x = np.linalg.norm(A, axis=0) + 1e-3 * np.arange(1, A.shape[1] + 1)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y = B @ x
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return 0.0
        y /= new
        if abs(new - est) <= tol * new:
            return math.sqrt(new)
        x, est = y, new
    raise NumericalError("spectral norm iteration did not converge")


def matrix_distance(A1, A2) -> tuple[float, float]:
    """Frobenius and spectral norms of ``A1 - A2``."""
    A1, A2 = np.asarray(A1, dtype=float), np.asarray(A2, dtype=float)
    if A1.shape != A2.shape:
        raise DataError(f"shape mismatch {A1.shape} vs {A2.shape}")
    D = A1 - A2
    return float(np.linalg.norm(D)), spectral_norm(D)


def triggered_coefficient(data: SpikeDataset, target: int, source: int, half_width: float = 0.002):
    """Mean number of ``target`` spikes within ``[T - w, T + w]`` of each
    ``source`` spike ``T``, pooled over trials.

    Returns ``(value, source_silent)``.
    """
    if not half_width > 0:
        raise DataError("half width must be positive")
    hits = 0
    n_src = 0
    for trial in data.trains:
        src, tgt = trial[source], trial[target]
        n_src += src.size
        if src.size and tgt.size:
            hi = np.searchsorted(tgt, src + half_width, side="right")
            lo = np.searchsorted(tgt, src - half_width, side="left")
            hits += int(np.sum(hi - lo))
    if n_src == 0:
        return 0.0, True
    return hits / n_src, False


def psth(data: SpikeDataset, bin_width: float = 0.25):
    """Spike counts pooled over all neurons and trials, per time bin.

    Returns ``(edges, counts)``; the last bin is closed on the right.
    """
    if not bin_width > 0:
        raise DataError("bin width must be positive")
    n_bins = max(1, int(math.ceil(data.t_max / bin_width - 1e-9)))
    edges = bin_width * np.arange(n_bins + 1)
    edges[-1] = max(edges[-1], data.t_max)
    allspikes = np.concatenate([tr for row in data.trains for tr in row])
    counts, _ = np.histogram(allspikes, bins=edges)
    return edges, counts


def write_psth_csv(edges, counts, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_start,bin_end,count\n")
        for a, b, c in zip(edges[:-1], edges[1:], counts):
            fh.write(f"{float(a)!r},{float(b)!r},{int(c)}\n")
