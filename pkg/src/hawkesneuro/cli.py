"""Batch command-line front end.

Every subcommand exits with 0 on success, 2 on a configuration error, 3 on a
data error and 4 on a numerical failure.  Errors are reported as one JSON
object on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources

import numpy as np

from . import jumpdiff as jd
from .adm4 import Adm4Config, fit_adm4, select_subnetwork
from .config import apply_overrides, load_toml, loads_toml
from .core import SamplePath, Window, load_potential, load_spike_dataset, write_potential, write_spike_dataset
from .depth import depth_validation
from .errors import ConfigError, DataError, HawkesNeuroError
from .gof import GofConfig, run_gof
from .model import ExpHawkesModel, adjacency, load_model, model_from_dict, save_model
from .network import matrix_distance, psth, sparsity_fraction, triggered_coefficient, write_psth_csv
from .npl import NplConfig, fit_npl
from .parallel import THREADS_ENV
from .pipeline import estim_config, parse_grid, run_pipeline, write_paths_csv
from .simulation import SimConfig, simulate


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _emit(obj, out=None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=1)
            fh.write("\n")
    else:
        json.dump(obj, sys.stdout, indent=1)
        sys.stdout.write("\n")


def _spikes(args):
    window = Window.parse(args.window) if getattr(args, "window", None) else None
    return load_spike_dataset(args.spikes, window)


def _adjacency_from(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, dict) and "type" in doc:
        return adjacency(model_from_dict(doc))
    if isinstance(doc, dict) and "adjacency" in doc:
        doc = doc["adjacency"]
    A = np.asarray(doc, dtype=float)
    if A.ndim != 2:
        raise DataError(f"{path}: expected a model document or a matrix")
    return A


def _x0(text: str):
    if ":" in text:
        lo, hi = text.split(":")
        return (float(lo), float(hi))
    return float(text)


# ---------------------------------------------------------------- commands


def cmd_simulate_hawkes(args):
    model = load_model(args.model)
    data = simulate(model, SimConfig(args.horizon, args.trials, args.seed), args.threads)
    write_spike_dataset(data, args.out)


def cmd_fit_adm4(args):
    kw = {"lasso_weight": args.lasso}
    if args.beta_grid:
        kw["beta_grid"] = parse_grid(args.beta_grid)
    model, diag = fit_adm4(_spikes(args), Adm4Config(**kw), args.threads)
    save_model(model, args.out)
    if args.diag:
        _emit(diag, args.diag)


def cmd_fit_npl(args):
    cfg = NplConfig(K=args.K, delta=args.delta, lasso_weight=args.lasso)
    model, diag = fit_npl(_spikes(args), cfg, args.threads)
    save_model(model, args.out)
    if args.diag:
        _emit(diag, args.diag)


def cmd_compare(args):
    A, B = _adjacency_from(args.a), _adjacency_from(args.b)
    fro, spec = matrix_distance(A, B)
    eps = args.threshold
    _emit(
        {
            "frobenius": fro,
            "spectral": spec,
            "threshold": eps,
            "sparsity_a": sparsity_fraction(A, eps),
            "sparsity_b": sparsity_fraction(B, eps),
            "same_support": bool(np.array_equal(np.abs(A) > eps, np.abs(B) > eps)),
        },
        args.out,
    )


def cmd_select(args):
    A = _adjacency_from(args.adjacency)
    sources = select_subnetwork(A, args.target, args.threshold)
    _emit({"target": args.target, "sources": sources}, args.out)
    if args.spikes and args.sub_out:
        data = _spikes(args)
        write_spike_dataset(data.select_neurons(sorted(sources + [args.target])), args.sub_out)


def cmd_triggered(args):
    value, silent = triggered_coefficient(_spikes(args), args.target, args.source, args.halfwidth)
    _emit({"target": args.target, "source": args.source, "half_width": args.halfwidth, "value": value, "source_silent": silent})


def cmd_psth(args):
    edges, counts = psth(_spikes(args), args.bin)
    if args.out:
        write_psth_csv(edges, counts, args.out)
    else:
        _emit({"edges": edges.tolist(), "counts": counts.tolist()})


def _refit_for(model, threads):
    if isinstance(model, ExpHawkesModel):
        cfg = Adm4Config(beta_grid=(model.beta,))
        return lambda d: fit_adm4(d, cfg, threads)[0]
    cfg = NplConfig(K=model.K, delta=model.delta)
    return lambda d: fit_npl(d, cfg, threads)[0]


def cmd_gof(args):
    data = _spikes(args)
    model = load_model(args.model)
    theta = "auto" if args.theta == "auto" else float(args.theta)
    cfg = GofConfig(alpha=args.alpha, theta=theta, n_subsamples=args.subsamples, rng_seed=args.seed)
    refit = _refit_for(model, args.threads) if args.holdout else None
    _emit(run_gof(model, data, cfg, refit, args.threads).to_dict(), args.out)


def cmd_fit_jumpdiff(args):
    cfg = load_toml(args.config) if args.config else {}
    sec = cfg.get("jumpdiff", cfg)
    path = load_potential(args.potential)
    factor = args.downsample or int(sec.get("downsample", 1))
    if factor > 1:
        path = path.downsample(factor)
    data = _spikes(args)
    if not 0 <= args.trial < data.n_trials:
        raise DataError(f"trial index {args.trial} out of range")
    driver = load_model(args.hawkes)
    if driver.n_neurons != data.n_neurons:
        raise DataError("the driver model and the spike file have different neuron counts")
    # spikes live on the window's time axis, the path on its own
    shift = path.t0 - (Window.parse(args.window).t_begin if args.window else 0.0)
    spikes = [tr[tr >= shift] - shift for tr in data.trains[args.trial]]
    path = SamplePath(0.0, path.dt, path.values)
    est = estim_config(sec)
    fitted = jd.fit_diffusion(path, est) if args.no_jumps else jd.fit_jumpdiff(path, spikes, driver, est)
    jd.save_coefficients(fitted, args.out)


def cmd_simulate_jumpdiff(args):
    fitted = jd.load_coefficients(args.coeffs)
    driver = load_model(args.hawkes) if args.hawkes else None
    if fitted.jumps and driver is None:
        raise ConfigError("coefficients include jumps; pass --hawkes with the driver model")
    paths = jd.regenerate(fitted, driver, args.T, args.dt, _x0(args.x0), args.seed, args.paths)
    if args.paths == 1:
        write_potential(paths[0], args.out)
    else:
        write_paths_csv(paths, args.out)


def cmd_depth(args):
    real = load_potential(args.real)
    real = SamplePath(0.0, real.dt, real.values)
    T = real.dt * (len(real) - 1)
    fitted = jd.load_coefficients(args.coeffs)
    plain = jd.load_coefficients(args.coeffs_nojump)
    driver = load_model(args.hawkes) if args.hawkes else None
    if fitted.jumps and driver is None:
        raise ConfigError("jump coefficients need --hawkes with the driver model")
    x0 = _x0(args.x0)
    report = depth_validation(
        real,
        lambda s, n: jd.regenerate(fitted, driver, T, real.dt, x0, s, n),
        lambda s, n: jd.regenerate(plain, None, T, real.dt, x0, s, n),
        n_rep=args.nrep,
        n_mc=args.mc,
        seed=args.seed,
        n_directions=args.directions,
        d=args.dims,
    )
    _emit({k: v.to_dict() for k, v in report.items()}, args.out)


def bundled_config() -> str:
    return resources.files("hawkesneuro").joinpath("data/synthetic.toml").read_text(encoding="utf-8")


def cmd_pipeline(args):
    if args.print_config:
        sys.stdout.write(bundled_config())
        return
    if args.config:
        cfg = load_toml(args.config)
    elif args.synthetic:
        cfg = loads_toml(bundled_config())
    else:
        raise ConfigError("pass --config FILE or --synthetic")
    apply_overrides(cfg, args.set)
    manifest = run_pipeline(cfg, args.out, args.threads)
    _emit({"stages": [s["name"] for s in manifest["stages"]], "status": "ok"})


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hawkesneuro", description=__doc__.split("\n")[0])
    p.add_argument("--threads", type=int, default=None, help=f"worker cap (default: ${THREADS_ENV} or 1)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def spikes_args(s, required=True):
        s.add_argument("--spikes", required=required, help="trial,neuron,time CSV")
        s.add_argument("--window", help="observation window a:b")

    s = sub.add_parser("simulate-hawkes", help="simulate spike trains from a model")
    s.add_argument("--model", required=True)
    s.add_argument("--horizon", type=float, default=13.0)
    s.add_argument("--trials", type=int, default=9)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_simulate_hawkes)

    s = sub.add_parser("fit-adm4", help="L1-penalized likelihood fit, exponential kernels")
    spikes_args(s)
    s.add_argument("--lasso", type=float, default=None, help="penalty weight (default: cross-validated)")
    s.add_argument("--beta-grid", help="lo:hi:n geometric grid of decays")
    s.add_argument("--out", required=True)
    s.add_argument("--diag")
    s.set_defaults(fn=cmd_fit_adm4)

    s = sub.add_parser("fit-npl", help="least-squares LASSO fit, piecewise-constant kernels")
    spikes_args(s)
    s.add_argument("--K", type=int, default=8)
    s.add_argument("--delta", type=float, default=0.025)
    s.add_argument("--lasso", type=float, default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--diag")
    s.set_defaults(fn=cmd_fit_npl)

    s = sub.add_parser("compare-matrices", help="distance and sparsity of two adjacency matrices")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--threshold", type=float, default=0.05)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_compare)

    s = sub.add_parser("select-subnetwork", help="sources acting on a target neuron")
    s.add_argument("--adjacency", required=True, help="model JSON or matrix JSON")
    s.add_argument("--target", type=int, required=True, help="0-based neuron index")
    s.add_argument("--threshold", type=float, default=1e-5)
    spikes_args(s, required=False)
    s.add_argument("--sub-out", help="write the subnetwork's spikes here")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_select)

    s = sub.add_parser("triggered", help="spike-triggered coefficient")
    spikes_args(s)
    s.add_argument("--target", type=int, required=True)
    s.add_argument("--source", type=int, required=True)
    s.add_argument("--halfwidth", type=float, default=0.002)
    s.set_defaults(fn=cmd_triggered)

    s = sub.add_parser("psth", help="peri-stimulus time histogram")
    spikes_args(s)
    s.add_argument("--bin", type=float, default=0.25)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_psth)

    s = sub.add_parser("gof", help="subsampled time-rescaling goodness-of-fit test")
    spikes_args(s)
    s.add_argument("--model", required=True)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--theta", default="auto")
    s.add_argument("--subsamples", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--holdout", action="store_true", help="refit on the complementary trials for every draw")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_gof)

    s = sub.add_parser("fit-jumpdiff", help="estimate jump-diffusion coefficients from a potential")
    s.add_argument("--potential", required=True)
    spikes_args(s)
    s.add_argument("--hawkes", required=True, help="driver model for the spike file's neurons")
    s.add_argument("--config", help="TOML file with estimator settings")
    s.add_argument("--trial", type=int, default=0, help="0-based trial matching the potential")
    s.add_argument("--downsample", type=int, default=None, help="keep one sample every k")
    s.add_argument("--no-jumps", action="store_true", help="fit the jump-free comparator instead")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_fit_jumpdiff)

    s = sub.add_parser("simulate-jumpdiff", help="regenerate paths from fitted coefficients")
    s.add_argument("--coeffs", required=True)
    s.add_argument("--hawkes", help="driver model (needed when the coefficients have jumps)")
    s.add_argument("--T", type=float, default=13.0)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--x0", default="-55:-35", help="start value or low:high range")
    s.add_argument("--paths", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_simulate_jumpdiff)

    s = sub.add_parser("depth-validate", help="depth ranking of a real path under two generators")
    s.add_argument("--real", required=True)
    s.add_argument("--coeffs", required=True)
    s.add_argument("--coeffs-nojump", required=True)
    s.add_argument("--hawkes")
    s.add_argument("--x0", default="-55:-35")
    s.add_argument("--nrep", type=int, default=100)
    s.add_argument("--mc", type=int, default=50)
    s.add_argument("--directions", type=int, default=1000)
    s.add_argument("--dims", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_depth)

    s = sub.add_parser("pipeline", help="run the full pipeline from a TOML config")
    s.add_argument("--config")
    s.add_argument("--synthetic", action="store_true", help="use the bundled synthetic config")
    s.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config entry")
    s.add_argument("--out", help="run directory (overrides [pipeline] out_dir)")
    s.add_argument("--print-config", action="store_true", help="print the bundled synthetic config and exit")
    s.set_defaults(fn=cmd_pipeline)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.fn(args)
        return 0
    except HawkesNeuroError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        if hasattr(exc, "stage"):
            err["stage"] = exc.stage
            err["cause"] = type(exc.cause).__name__
        code = exc.exit_code
    except OSError as exc:
        err = {"error": "DataError", "message": str(exc), "exit_code": DataError.exit_code}
        code = DataError.exit_code
    json.dump(err, sys.stderr)
    sys.stderr.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
