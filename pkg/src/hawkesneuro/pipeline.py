"""End-to-end batch pipeline driven by a TOML config.

Stages run in a fixed order and each writes its outputs into the run
directory.  A ``manifest.json`` records package versions, seeds, stage status
and a SHA-256 hash of every output file, so that two runs can be compared
byte for byte.
"""
from __future__ import annotations

import hashlib
import json
import platform
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import jumpdiff as jd
from .adm4 import Adm4Config, fit_adm4, select_subnetwork
from .config import take
from .core import (
    SamplePath,
    SpikeDataset,
    Window,
    drop_empty,
    load_potential,
    load_spike_dataset,
    write_potential,
    write_spike_dataset,
)
from .depth import depth_validation
from .errors import ConfigError, DataError, HawkesNeuroError
from .gof import GofConfig, run_gof
from .model import ExpHawkesModel, adjacency, save_model
from .network import matrix_distance, psth, sparsity_fraction, write_psth_csv
from .npl import NplConfig, fit_npl
from .simulation import SimConfig, simulate

STAGES = (
    "ingest",
    "psth",
    "fit-adm4-full",
    "select-subnetwork",
    "fit-subnetwork",
    "compare",
    "gof",
    "fit-jumpdiff",
    "regenerate",
    "depth-validate",
)


class StageError(HawkesNeuroError):
    """A stage failed; carries the stage name and the cause's exit code."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


def parse_grid(text) -> tuple:
    """``"lo:hi:n"`` -> ``n`` geometrically spaced values; lists pass through."""
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        lo, hi, n = str(text).split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid {text!r}, expected 'lo:hi:n'") from exc
    if not (0 < lo <= hi) or n < 1:
        raise ConfigError(f"bad grid {text!r}")
    return tuple(np.geomspace(lo, hi, n)) if n > 1 else (lo,)


def estim_config(section: dict) -> jd.EstimConfig:
    known = {"beta_trunc", "kappa_sigma", "kappa_g", "kappa_b", "dims", "nw_bandwidth", "g_uses_y"}
    try:
        return jd.EstimConfig(**{k: v for k, v in section.items() if k in known})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"artifact": pkg, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def synthetic_network(
    m: int = 20,
    central: int = 19,
    n_sources: int = 4,
    seed: int = 0,
    baseline: float = 2.0,
    weight: float = 0.5,
) -> ExpHawkesModel:
    """Sparse exponential network in which ``n_sources`` neurons excite the
    central one and a few other pairs are linked at random."""
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    A = np.zeros((m, m))
    others = [l for l in range(m) if l != central]
    sources = rng.choice(others, size=n_sources, replace=False)
    A[central, sources] = weight
    for _ in range(m // 2):
        i, l = rng.choice(others, size=2, replace=False)
        A[i, l] = 0.2
    return ExpHawkesModel(np.full(m, baseline), A, 5.0)


def synthetic_potential(driver_spikes, T: float, dt: float, seed: int) -> SamplePath:
    """Membrane potential with ``b = -2(x + 45)``, ``sigma = 0.5``, ``a = 2``."""
    model = jd.JumpDiffusionModel(
        b=lambda x: -2.0 * (x + 45.0),
        sigma=lambda x: np.full(np.shape(x), 0.5),
        a=lambda x: np.full(np.shape(x), 2.0),
    )
    path, _ = jd.simulate_path(model, -45.0, dt, T, spikes=driver_spikes, seed=seed)
    return path


@dataclass
class Run:
    cfg: dict
    out: Path
    threads: int | None
    manifest: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        sec = self.cfg.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
        return sec

    @property
    def seed(self) -> int:
        return int(self.section("pipeline").get("seed", 0))

    def path(self, name: str) -> Path:
        return self.out / name


# ---------------------------------------------------------------- stages


def _ingest(run: Run) -> list:
    sec = run.section("ingest")
    syn = run.section("synthetic")
    outputs = []
    if syn.get("enabled", False):
        m = take(syn, "neurons", 20, int)
        central = take(syn, "central", m - 1, int)
        model = synthetic_network(
            m,
            central,
            take(syn, "sources", 4, int),
            run.seed,
            take(syn, "baseline", 2.0, float),
            take(syn, "weight", 0.5, float),
        )
        horizon = take(syn, "horizon", 13.0, float)
        data = simulate(model, SimConfig(horizon, take(syn, "trials", 9, int), run.seed), run.threads)
        save_model(model, run.path("generator.json"))
        write_spike_dataset(data, run.path("spikes.csv"))
        src = np.flatnonzero(model.A[central] > 0)
        trial = take(sec, "trial", 0, int)
        pot = synthetic_potential([data.trains[trial][l] for l in src], horizon, take(syn, "dt", 1e-3, float), run.seed)
        write_potential(pot, run.path("potential.csv"))
        outputs += ["generator.json", "spikes.csv", "potential.csv"]
        spikes_file, potential_file = run.path("spikes.csv"), run.path("potential.csv")
        window = Window(0.0, horizon)
        central_id = data.neuron_ids[central]
    else:
        if "spikes" not in sec:
            raise ConfigError("[ingest] needs 'spikes' unless [synthetic] is enabled")
        spikes_file = Path(sec["spikes"])
        potential_file = Path(sec["potential"]) if sec.get("potential") else None
        window = Window.parse(sec["window"]) if "window" in sec else None
        if "central" not in sec:
            raise ConfigError("[ingest] needs the 'central' neuron id")
        central_id = int(sec["central"])
    try:
        data = load_spike_dataset(spikes_file, window)
    except OSError as exc:
        raise DataError(f"cannot read {spikes_file}: {exc}") from exc
    data, dropped = drop_empty(data)
    if central_id not in data.neuron_ids:
        raise DataError(f"central neuron {central_id} is absent or silent")
    _dump(dropped, run.path("dropped.json"))
    run.state.update(data=data, central=data.neuron_ids.index(central_id), potential_file=potential_file)
    return outputs + ["dropped.json"]


def _psth(run: Run) -> list:
    sec = run.section("psth")
    if not sec.get("enabled", True):
        return []
    edges, counts = psth(run.state["data"], take(sec, "bin", 0.25, float))
    write_psth_csv(edges, counts, run.path("psth.csv"))
    return ["psth.csv"]


def _adm4_config(run: Run) -> Adm4Config:
    sec = run.section("adm4")
    kw = {}
    if "lasso" in sec:
        kw["lasso_weight"] = take(sec, "lasso", kind=float)
    if "beta_grid" in sec:
        kw["beta_grid"] = parse_grid(sec["beta_grid"])
    for key in ("max_iter", "cv_grid_size"):
        if key in sec:
            kw[key] = take(sec, key, kind=int)
    for key in ("tol", "a_max"):
        if key in sec:
            kw[key] = take(sec, key, kind=float)
    return Adm4Config(**kw)


def _fit_full(run: Run) -> list:
    model, diag = fit_adm4(run.state["data"], _adm4_config(run), run.threads)
    save_model(model, run.path("adm4_full.json"))
    _dump(diag, run.path("adm4_full_diag.json"))
    run.state["full"] = model
    return ["adm4_full.json", "adm4_full_diag.json"]


def _select(run: Run) -> list:
    sec = run.section("subnetwork")
    data, c = run.state["data"], run.state["central"]
    sources = select_subnetwork(adjacency(run.state["full"]), c, take(sec, "threshold", 1e-5, float))
    if not sources:
        raise DataError("no neuron influences the central neuron above the threshold")
    members = sorted(sources + [c])
    run.state.update(sources=sources, members=members, sub=data.select_neurons(members))
    _dump(
        {
            "central": data.neuron_ids[c],
            "sources": [data.neuron_ids[l] for l in sources],
            "members": [data.neuron_ids[l] for l in members],
        },
        run.path("subnetwork.json"),
    )
    write_spike_dataset(run.state["sub"], run.path("sub_spikes.csv"))
    return ["subnetwork.json", "sub_spikes.csv"]


def _npl_config(run: Run) -> NplConfig:
    sec = run.section("npl")
    return NplConfig(
        K=take(sec, "K", 8, int),
        delta=take(sec, "delta", 0.025, float),
        lasso_weight=take(sec, "lasso", None, float),
        gamma=take(sec, "gamma", 1.0, float),
    )


def _fit_sub(run: Run) -> list:
    sub = run.state["sub"]
    adm, d1 = fit_adm4(sub, _adm4_config(run), run.threads)
    npl, d2 = fit_npl(sub, _npl_config(run), run.threads)
    save_model(adm, run.path("adm4_sub.json"))
    save_model(npl, run.path("npl_sub.json"))
    _dump(d1, run.path("adm4_sub_diag.json"))
    _dump(d2, run.path("npl_sub_diag.json"))
    run.state.update(adm4_sub=adm, npl_sub=npl)
    return ["adm4_sub.json", "npl_sub.json", "adm4_sub_diag.json", "npl_sub_diag.json"]


def _compare(run: Run) -> list:
    eps = take(run.section("compare"), "threshold", 0.05, float)
    A1, A2 = adjacency(run.state["adm4_sub"]), adjacency(run.state["npl_sub"])
    fro, spec = matrix_distance(A1, A2)
    _dump(
        {
            "frobenius": fro,
            "spectral": spec,
            "threshold": eps,
            "sparsity_adm4": sparsity_fraction(A1, eps),
            "sparsity_npl": sparsity_fraction(A2, eps),
            "same_support": bool(np.array_equal(np.abs(A1) > eps, np.abs(A2) > eps)),
            "adjacency_adm4": A1.tolist(),
            "adjacency_npl": A2.tolist(),
        },
        run.path("compare.json"),
    )
    return ["compare.json"]


def _gof(run: Run) -> list:
    sec = run.section("gof")
    cfg = GofConfig(
        alpha=take(sec, "alpha", 0.05, float),
        n_subsamples=take(sec, "subsamples", 100, int),
        rng_seed=take(sec, "seed", run.seed, int),
    )
    out = []
    for key in ("adm4_sub", "npl_sub"):
        rep = run_gof(run.state[key], run.state["sub"], cfg, threads=run.threads)
        _dump(rep.to_dict(), run.path(f"gof_{key}.json"))
        out.append(f"gof_{key}.json")
    return out


def _fit_jumpdiff(run: Run) -> list:
    sec = run.section("jumpdiff")
    pfile = run.state.get("potential_file")
    if pfile is None:
        raise ConfigError("fitting the jump-diffusion needs a potential file ([ingest] potential)")
    try:
        path = load_potential(pfile)
    except OSError as exc:
        raise DataError(f"cannot read {pfile}: {exc}") from exc
    data = run.state["data"]
    path = path.restrict(data.window)
    factor = take(sec, "downsample", 1, int)
    if factor > 1:
        path = path.downsample(factor)
    # put the path on the spike time axis, starting at 0
    offset = path.t0
    path = SamplePath(0.0, path.dt, path.values)
    trial = take(run.section("ingest"), "trial", 0, int)
    if not 0 <= trial < data.n_trials:
        raise DataError(f"trial index {trial} out of range")
    src = run.state["sources"]
    members = run.state["members"]
    full = run.state["adm4_sub"]
    pos = [members.index(l) for l in src]
    driver = ExpHawkesModel(full.mu[pos], full.A[np.ix_(pos, pos)], full.beta)
    spikes = [tr[(tr >= offset)] - offset for tr in (data.trains[trial][l] for l in src)]
    cfg = estim_config(sec)
    fitted = jd.fit_jumpdiff(path, spikes, driver, cfg)
    plain = jd.fit_diffusion(path, cfg)
    jd.save_coefficients(fitted, run.path("coeffs.json"))
    jd.save_coefficients(plain, run.path("coeffs_nojump.json"))
    save_model(driver, run.path("driver.json"))
    run.state.update(path=path, fitted=fitted, plain=plain, driver=driver)
    return ["coeffs.json", "coeffs_nojump.json", "driver.json"]


def _x0(sec: dict):
    x0 = sec.get("x0", [-55.0, -35.0])
    if isinstance(x0, list):
        if len(x0) != 2:
            raise ConfigError("x0 must be a number or a [low, high] pair")
        return (float(x0[0]), float(x0[1]))
    return float(x0)


def _regenerate(run: Run) -> list:
    sec = run.section("regenerate")
    path = run.state["path"]
    T = path.dt * (len(path) - 1)
    paths = jd.regenerate(
        run.state["fitted"],
        run.state["driver"],
        T=T,
        dt=path.dt,
        x0=_x0(sec),
        seed=take(sec, "seed", run.seed, int),
        n_paths=take(sec, "paths", 10, int),
    )
    write_paths_csv(paths, run.path("regenerated.csv"))
    return ["regenerated.csv"]


def _depth(run: Run) -> list:
    sec = run.section("depth")
    path = run.state["path"]
    T = path.dt * (len(path) - 1)
    x0 = _x0(run.section("regenerate"))
    fitted, plain, driver = run.state["fitted"], run.state["plain"], run.state["driver"]

    def gen_with(seed, n):
        return jd.regenerate(fitted, driver, T, path.dt, x0, seed, n)

    def gen_without(seed, n):
        return jd.regenerate(plain, None, T, path.dt, x0, seed, n)

    report = depth_validation(
        path,
        gen_with,
        gen_without,
        n_rep=take(sec, "nrep", 100, int),
        n_mc=take(sec, "mc", 50, int),
        seed=take(sec, "seed", run.seed, int),
        n_directions=take(sec, "directions", 1000, int),
        d=take(sec, "dims", 50, int),
    )
    _dump({k: v.to_dict() for k, v in report.items()}, run.path("depth.json"))
    return ["depth.json"]


def write_paths_csv(paths, out) -> None:
    """Columns ``time, path_0, path_1, ...`` on the shared grid."""
    times = paths[0].times
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(",".join(["time"] + [f"path_{i}" for i in range(len(paths))]) + "\n")
        for k, t in enumerate(times):
            fh.write(",".join([repr(float(t))] + [repr(float(p.values[k])) for p in paths]) + "\n")


RUNNERS = {
    "ingest": _ingest,
    "psth": _psth,
    "fit-adm4-full": _fit_full,
    "select-subnetwork": _select,
    "fit-subnetwork": _fit_sub,
    "compare": _compare,
    "gof": _gof,
    "fit-jumpdiff": _fit_jumpdiff,
    "regenerate": _regenerate,
    "depth-validate": _depth,
}


def run_pipeline(cfg: dict, out_dir=None, threads: int | None = None) -> dict:
    """Run every stage in order and return the manifest.

    On failure the manifest written so far is kept, the failing stage is
    marked, and a :class:`StageError` is raised.
    """
    if out_dir is None:
        out_dir = cfg.get("pipeline", {}).get("out_dir")
    if not out_dir:
        raise ConfigError("no output directory given ([pipeline] out_dir)")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = Run(cfg, out, threads)
    run.manifest = {
        "versions": versions(),
        "seed": run.seed,
        "threads": threads,
        "config": cfg,
        "stages": [],
    }
    for name in STAGES:
        entry = {"name": name, "status": "running"}
        run.manifest["stages"].append(entry)
        try:
            files = RUNNERS[name](run)
        except Exception as exc:
            entry.update(status="failed", error=str(exc), error_type=type(exc).__name__)
            _dump(run.manifest, out / "manifest.json")
            raise StageError(name, exc) from exc
        entry.update(status="ok", outputs={f: sha256(out / f) for f in files})
    _dump(run.manifest, out / "manifest.json")
    return run.manifest
