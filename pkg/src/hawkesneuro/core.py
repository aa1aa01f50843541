"""Spike-train and sampled-path containers, CSV ingestion and spike extraction.

Spike files are UTF-8 CSV with header ``trial,neuron,time`` (seconds).
Potential files are CSV with header ``time,potential_mv`` on a uniform grid.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Window:
    t_begin: float
    t_end: float

    def __post_init__(self):
        if not (np.isfinite(self.t_begin) and np.isfinite(self.t_end)):
            raise DataError("window bounds must be finite")
        if not self.t_begin < self.t_end:
            raise DataError(f"degenerate window [{self.t_begin}, {self.t_end}]")

    @property
    def length(self) -> float:
        return self.t_end - self.t_begin

    @classmethod
    def parse(cls, text: str) -> "Window":
        """Parse ``"a:b"``."""
        try:
            a, b = text.split(":")
            return cls(float(a), float(b))
        except ValueError as exc:
            raise DataError(f"cannot parse window {text!r}, expected 'a:b'") from exc


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpikeDataset:
    """Multi-trial, multi-neuron spike times observed on ``[0, t_max]``.

    ``trains[i][j]`` holds the sorted event times of neuron ``j`` in trial ``i``.
    ``origin`` is the absolute time of the window start, so that absolute
    times are ``origin + t``.
    """

    trains: tuple
    t_max: float
    origin: float = 0.0
    trial_ids: tuple = ()
    neuron_ids: tuple = ()

    def __post_init__(self):
        trains = tuple(tuple(_frozen(tr) for tr in row) for row in self.trains)
        if not trains or not trains[0]:
            raise DataError("dataset needs at least one trial and one neuron")
        m = len(trains[0])
        if any(len(row) != m for row in trains):
            raise DataError("incomplete trial x neuron grid")
        if not self.t_max > 0:
            raise DataError("window length must be positive")
        for row in trains:
            for tr in row:
                if tr.size and (not np.all(np.isfinite(tr)) or np.any(np.diff(tr) <= 0)):
                    raise DataError("spike times must be finite and strictly increasing")
                if tr.size and (tr[0] < 0 or tr[-1] > self.t_max):
                    raise DataError("spike time outside the observation window")
        object.__setattr__(self, "trains", trains)
        if not self.trial_ids:
            object.__setattr__(self, "trial_ids", tuple(range(1, len(trains) + 1)))
        if not self.neuron_ids:
            object.__setattr__(self, "neuron_ids", tuple(range(1, m + 1)))
        if len(self.trial_ids) != len(trains) or len(self.neuron_ids) != m:
            raise DataError("id labels do not match the grid")

    @property
    def n_trials(self) -> int:
        return len(self.trains)

    @property
    def n_neurons(self) -> int:
        return len(self.trains[0])

    @property
    def window(self) -> Window:
        return Window(self.origin, self.origin + self.t_max)

    def counts(self) -> np.ndarray:
        """Event counts, shape (n_trials, n_neurons)."""
        return np.array([[tr.size for tr in row] for row in self.trains], dtype=int)

    def total_events(self) -> int:
        return int(self.counts().sum())

    def trial(self, i: int) -> tuple:
        return self.trains[i]

    def select_neurons(self, indices: Sequence[int]) -> "SpikeDataset":
        idx = list(indices)
        return SpikeDataset(
            trains=tuple(tuple(row[j] for j in idx) for row in self.trains),
            t_max=self.t_max,
            origin=self.origin,
            trial_ids=self.trial_ids,
            neuron_ids=tuple(self.neuron_ids[j] for j in idx),
        )

    def select_trials(self, indices: Sequence[int]) -> "SpikeDataset":
        idx = list(indices)
        return SpikeDataset(
            trains=tuple(self.trains[i] for i in idx),
            t_max=self.t_max,
            origin=self.origin,
            trial_ids=tuple(self.trial_ids[i] for i in idx),
            neuron_ids=self.neuron_ids,
        )

    def restrict(self, window: Window) -> "SpikeDataset":
        """Restrict to ``window`` (given in this dataset's own time axis) and
        shift it to start at 0."""
        lo, hi = max(window.t_begin, 0.0), min(window.t_end, self.t_max)
        if not lo < hi:
            raise DataError("restriction window does not overlap the data")
        trains = tuple(
            tuple(tr[(tr >= lo) & (tr <= hi)] - lo for tr in row) for row in self.trains
        )
        return SpikeDataset(trains, hi - lo, self.origin + lo, self.trial_ids, self.neuron_ids)

    def equals(self, other: "SpikeDataset", atol: float = 1e-9) -> bool:
        if (self.n_trials, self.n_neurons) != (other.n_trials, other.n_neurons):
            return False
        if abs(self.t_max - other.t_max) > atol:
            return False
        for ra, rb in zip(self.trains, other.trains):
            for a, b in zip(ra, rb):
                if a.shape != b.shape or not np.allclose(a, b, rtol=0, atol=atol):
                    return False
        return True


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Scalar series sampled at ``t0 + k*dt``."""

    t0: float
    dt: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.ndim != 1 or vals.size < 2:
            raise DataError("a sample path needs at least two values")
        if not self.dt > 0:
            raise DataError("sampling step must be positive")
        if not np.all(np.isfinite(vals)):
            raise DataError("sample path contains non-finite values")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    def downsample(self, factor: int) -> "SamplePath":
        """Keep one observation every ``factor``."""
        if factor < 1:
            raise DataError("downsampling factor must be >= 1")
        return SamplePath(self.t0, self.dt * factor, self.values[::factor])

    def restrict(self, window: Window) -> "SamplePath":
        t = self.times
        keep = (t >= window.t_begin) & (t <= window.t_end)
        if keep.sum() < 2:
            raise DataError("fewer than two samples inside the window")
        k0 = int(np.argmax(keep))
        return SamplePath(0.0 + (t[k0] - window.t_begin), self.dt, self.values[keep])


def load_spike_dataset(path, window: Window | None = None) -> SpikeDataset:
    """Read a ``trial,neuron,time`` CSV and restrict it to ``window``.

    Trial and neuron ids are mapped densely in increasing order of their
    labels over the whole file, so neurons silent inside the window are kept.
    Times are shifted so that the window starts at 0.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["trial", "neuron", "time"]:
            raise DataError(f"{path}: line 1: expected header 'trial,neuron,time'")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                trial, neuron, t = int(rec[0]), int(rec[1]), float(rec[2])
                if len(rec) != 3:
                    raise ValueError
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}: line {lineno}: cannot parse {','.join(rec)!r}") from exc
            if not np.isfinite(t):
                raise DataError(f"{path}: line {lineno}: non-finite time")
            rows.append((trial, neuron, t))
    if not rows:
        raise DataError(f"{path}: no spike rows")
    trial_ids = sorted({r[0] for r in rows})
    neuron_ids = sorted({r[1] for r in rows})
    if window is None:
        times = [r[2] for r in rows]
        window = Window(min(0.0, min(times)), max(times))
    ti = {v: i for i, v in enumerate(trial_ids)}
    ni = {v: i for i, v in enumerate(neuron_ids)}
    grid = [[[] for _ in neuron_ids] for _ in trial_ids]
    n_kept = 0
    for trial, neuron, t in rows:
        if window.t_begin <= t <= window.t_end:
            grid[ti[trial]][ni[neuron]].append(t - window.t_begin)
            n_kept += 1
    if n_kept == 0:
        raise DataError(f"{path}: no spikes inside window [{window.t_begin}, {window.t_end}]")
    trains = []
    for i, row in enumerate(grid):
        out = []
        for j, tr in enumerate(row):
            arr = np.sort(np.asarray(tr, dtype=float))
            if arr.size > 1 and np.any(np.diff(arr) == 0):
                raise DataError(
                    f"{path}: duplicate event for trial {trial_ids[i]}, neuron {neuron_ids[j]}"
                )
            out.append(arr)
        trains.append(out)
    return SpikeDataset(trains, window.length, window.t_begin, tuple(trial_ids), tuple(neuron_ids))


def write_spike_dataset(dataset: SpikeDataset, path) -> None:
    """Write absolute times (``origin + t``) so a reload with
    ``dataset.window`` reproduces the dataset."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "neuron", "time"])
        for i, row in enumerate(dataset.trains):
            for j, tr in enumerate(row):
                for t in tr:
                    w.writerow([dataset.trial_ids[i], dataset.neuron_ids[j], repr(float(dataset.origin + t))])


def load_potential(path, rel_tol: float = 1e-6) -> SamplePath:
    """Read a ``time,potential_mv`` CSV sampled on a uniform grid."""
    data = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["time", "potential_mv"]:
            raise DataError(f"{path}: line 1: expected header 'time,potential_mv'")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                data.append((float(rec[0]), float(rec[1])))
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}: line {lineno}: cannot parse {','.join(rec)!r}") from exc
    if len(data) < 2:
        raise DataError(f"{path}: need at least two samples")
    arr = np.asarray(data)
    t, v = arr[:, 0], arr[:, 1]
    dt = t[1] - t[0]
    if not dt > 0:
        raise DataError(f"{path}: time column must increase")
    steps = np.diff(t)
    if np.max(np.abs(steps - dt)) > rel_tol * dt:
        raise DataError(f"{path}: sampling step is not uniform")
    return SamplePath(float(t[0]), float(dt), v)


def write_potential(path_obj: SamplePath, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "potential_mv"])
        for t, v in zip(path_obj.times, path_obj.values):
            w.writerow([repr(float(t)), repr(float(v))])


def extract_spikes_from_potential(path: SamplePath, threshold: float = -20.0) -> np.ndarray:
    """Times of upward threshold crossings, one per excursion.

    Sample ``k`` is an event when ``values[k-1] <= threshold < values[k]``.
    """
    if not np.isfinite(threshold):
        raise DataError("threshold must be finite")
    v = path.values
    k = np.flatnonzero((v[:-1] <= threshold) & (v[1:] > threshold)) + 1
    return path.t0 + path.dt * k.astype(float)


def drop_empty(dataset: SpikeDataset) -> tuple[SpikeDataset, dict]:
    """Remove neurons silent in every trial, then trials silent for every neuron.

    The report lists the removed ids under ``"neurons"`` and ``"trials"``.
    """
    counts = dataset.counts()
    keep_n = np.flatnonzero(counts.sum(axis=0) > 0)
    if keep_n.size == 0:
        raise DataError("every neuron is empty")
    keep_t = np.flatnonzero(counts.sum(axis=1) > 0)
    report = {
        "neurons": [dataset.neuron_ids[j] for j in range(dataset.n_neurons) if j not in set(keep_n)],
        "trials": [dataset.trial_ids[i] for i in range(dataset.n_trials) if i not in set(keep_t)],
    }
    if not report["neurons"] and not report["trials"]:
        return dataset, report
    return dataset.select_neurons(keep_n).select_trials(keep_t), report
