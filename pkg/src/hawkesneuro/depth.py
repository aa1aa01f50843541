"""Random-direction halfspace depth of sampled curves, and the depth-ranking
comparison of two path generators against an observed path."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import SamplePath
from .errors import DataError


def _check_grid(curves: Sequence[SamplePath]) -> None:
    ref = curves[0]
    for c in curves[1:]:
        if len(c) != len(ref) or abs(c.dt - ref.dt) > 1e-12 * ref.dt or abs(c.t0 - ref.t0) > 1e-12:
            raise DataError("curves are not on a common grid")


def discretize(curves: Sequence[SamplePath], d: int = 50) -> np.ndarray:
    """Values at ``d`` equally spaced grid indices, shape ``(len(curves), d)``."""
    _check_grid(curves)
    n = len(curves[0])
    idx = np.unique(np.round(np.linspace(0, n - 1, min(d, n))).astype(int))
    return np.vstack([c.values[idx] for c in curves])


def directions(n_directions: int, d: int, seed: int) -> np.ndarray:
    """Unit vectors; the first ``k`` rows do not depend on ``n_directions``."""
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    u = rng.standard_normal((n_directions, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def halfspace_depth(points: np.ndarray, cloud: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Projection depth approximation: for each point, the minimum over
    ``dirs`` of the smaller fraction of ``cloud`` lying on either side."""
    points = np.atleast_2d(points)
    n = cloud.shape[0]
    proj_c = np.sort(cloud @ dirs.T, axis=0)  # (n, n_dir)
    proj_p = points @ dirs.T  # (m, n_dir)
    # ties must survive rounding differences between the two products
    tol = 1e-10 * max(1.0, float(np.max(np.abs(proj_c), initial=0.0)))
    depth = np.full(points.shape[0], np.inf)
    for k in range(dirs.shape[0]):
        col = proj_c[:, k]
        q = proj_p[:, k]
        le = np.searchsorted(col, q + tol, side="right")
        ge = n - np.searchsorted(col, q - tol, side="left")
        depth = np.minimum(depth, np.minimum(le, ge) / n)
    return depth


def curve_depth(query: SamplePath, sample: Sequence[SamplePath], n_directions: int = 1000, seed: int = 0, d: int = 50) -> float:
    """Depth of ``query`` with respect to ``sample``, in ``[0, 1]``."""
    if len(sample) < 2:
        raise DataError("need at least two sample curves")
    X = discretize([query, *sample], d)
    dirs = directions(n_directions, X.shape[1], seed)
    return float(halfspace_depth(X[:1], X[1:], dirs)[0])


def _rank(real_depth: float, member_depths: np.ndarray) -> int:
    """1 + number of members strictly less deep than the real path."""
    return 1 + int(np.sum(member_depths < real_depth))


@dataclass
class DepthSummary:
    depths: list
    ranks: list
    member_depth_median: list

    @property
    def median_depth(self) -> float:
        return float(np.median(self.depths))

    @property
    def median_rank(self) -> float:
        return float(np.median(self.ranks))

    def to_dict(self) -> dict:
        return {
            "median_depth": self.median_depth,
            "median_rank": self.median_rank,
            "depths": self.depths,
            "ranks": self.ranks,
            "member_depth_median": self.member_depth_median,
        }


def rank_in_sample(real: SamplePath, sample: Sequence[SamplePath], n_directions: int, seed: int, d: int):
    """Depth and rank of ``real`` among the members of ``sample``.

    All depths, the real path's included, are taken with respect to the pooled
    set ``sample + [real]`` with one shared set of directions, so that under
    exchangeability the rank is uniform on ``1..N+1``.
    """
    X = discretize([real, *sample], d)
    dirs = directions(n_directions, X.shape[1], seed)
    dep = halfspace_depth(X, X, dirs)
    return float(dep[0]), _rank(dep[0], dep[1:]), dep[1:]


def depth_validation(
    real: SamplePath,
    gen_with_jumps: Callable[[int, int], list],
    gen_without: Callable[[int, int], list],
    n_rep: int = 100,
    n_mc: int = 50,
    seed: int = 0,
    n_directions: int = 1000,
    d: int = 50,
) -> dict:
    """Rank the real path within fresh samples of each generator, ``n_mc`` times.

    A generator is a callable ``(seed, n) -> list[SamplePath]`` producing
    paths on the real path's grid.
    """
    out = {}
    for name, gen, offset in (("jumps", gen_with_jumps, 0), ("no_jumps", gen_without, 1)):
        depths, ranks, med = [], [], []
        for r in range(n_mc):
            s = int(np.random.SeedSequence([int(seed), offset, r]).generate_state(1)[0])
            sample = gen(s, n_rep)
            dep, rk, members = rank_in_sample(real, sample, n_directions, s, d)
            depths.append(dep)
            ranks.append(rk)
            med.append(float(np.median(members)))
        out[name] = DepthSummary(depths, ranks, med)
    return out
