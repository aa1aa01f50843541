"""End-to-end acceptance checks on synthetic data.

Each test records one PASS/FAIL line, printed in the terminal summary and to
stdout, then asserts at the stated tolerance.
"""
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE
from hawkesneuro import jumpdiff as jd
from hawkesneuro.adm4 import Adm4Config, fit_adm4
from hawkesneuro.cli import bundled_config
from hawkesneuro.config import apply_overrides, loads_toml
from hawkesneuro.depth import depth_validation
from hawkesneuro.gof import GofConfig, quantile, run_gof, subsample_size
from hawkesneuro.model import ExpHawkesModel, PiecewiseHawkesModel, adjacency, compensator, spectral_radius
from hawkesneuro.network import matrix_distance
from hawkesneuro.npl import NplConfig, build_ls_system, gram_matrix, kkt_residual, fit_npl
from hawkesneuro.pipeline import run_pipeline
from hawkesneuro.simulation import SimConfig, simulate, simulate_trial, trial_rng

pytestmark = pytest.mark.slow

A_TRUE = np.array([[0.3, 0, 0], [0.4, 0.2, 0], [0, 0, 0.3]])
EXP_TRUE = ExpHawkesModel(np.full(3, 0.5), A_TRUE, 3.0)
BETA_GRID = (1.0, 2.0, 3.0, 5.0, 10.0)


def record(key, ok, detail):
    ACCEPTANCE[key] = (bool(ok), detail)
    print(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="module")
def exp_data():
    return {T: simulate(EXP_TRUE, SimConfig(T, 9, 1)) for T in (50.0, 500.0)}


@pytest.fixture(scope="module")
def adm4_fit(exp_data):
    t0 = time.perf_counter()
    model, diag = fit_adm4(exp_data[500.0], Adm4Config(beta_grid=BETA_GRID), threads=1)
    return model, diag, time.perf_counter() - t0


def test_1_hawkes_recovery(adm4_fit):
    model, diag, secs = adm4_fit
    A = adjacency(model)
    support = np.array_equal(A > 0.05, A_TRUE > 0.05)
    err = float(np.max(np.abs(A - A_TRUE)))
    beta_err = abs(model.beta - 3.0) / 3.0
    ok = support and err <= 0.15 and beta_err <= 0.5 and secs <= 120
    record(1, ok, f"support={support} max|a-a*|={err:.4f} beta={model.beta} lasso={diag['lasso_weight']:.3g} time={secs:.1f}s")
    assert ok


def test_2_npl_recovery():
    alpha = np.array([[[2.0, 1.0], [0.0, 0.0]], [[3.0, 1.0], [1.0, 0.5]]])
    truth = PiecewiseHawkesModel(np.full(2, 0.5), alpha, 0.1)
    assert spectral_radius(adjacency(truth)) < 1
    data = simulate(truth, SimConfig(500.0, 9, 7))
    # the data-driven default weight is tuned for support recovery and shrinks
    # amplitudes; recovery of the values is checked with a light penalty
    cfg = NplConfig(K=2, delta=0.1, lasso_weight=1.0)
    model, diag = fit_npl(data, cfg, threads=1)
    default_err = float(np.max(np.abs(fit_npl(data, NplConfig(K=2, delta=0.1), threads=1)[0].alpha - alpha)))
    G = gram_matrix(data, 2, 0.1)
    kkt = 0.0
    for j in range(2):
        sys = build_ls_system(data, cfg, j, G)
        theta = np.concatenate([[model.mu[j]], model.alpha[j].ravel()])
        kkt = max(kkt, kkt_residual(sys, theta, diag["lasso_weight"][j]))
    a_err = float(np.max(np.abs(model.alpha - alpha)))
    adj_err = float(np.max(np.abs(adjacency(model) - adjacency(truth))))
    ok = a_err <= 0.2 and adj_err <= 0.05 and kkt <= 1e-6
    record(2, ok, f"max|alpha err|={a_err:.4f} max|adj err|={adj_err:.4f} kkt={kkt:.2e} (default weight: {default_err:.3f})")
    assert ok


def test_3_method_agreement(exp_data, adm4_fit):
    dist = {}
    support_same = None
    for T, data in exp_data.items():
        if T == 500.0:
            A1 = adjacency(adm4_fit[0])
        else:
            A1 = adjacency(fit_adm4(data, Adm4Config(beta_grid=BETA_GRID), threads=1)[0])
        A2 = adjacency(fit_npl(data, NplConfig(K=10, delta=0.15), threads=1)[0])
        dist[T] = matrix_distance(A1, A2)[0]
        if T == 500.0:
            support_same = np.array_equal(np.abs(A1) > 0.05, np.abs(A2) > 0.05)
    ok = dist[500.0] <= 0.5 and support_same and dist[500.0] < dist[50.0]
    record(3, ok, f"frobenius T=500: {dist[500.0]:.4f}  T=50: {dist[50.0]:.4f}  same support={support_same}")
    assert ok


def test_4_gof_calibration(exp_data, adm4_fit):
    t0 = time.perf_counter()
    data = exp_data[500.0]
    cfg = GofConfig(alpha=0.05, n_subsamples=100, rng_seed=0)
    q, _ = quantile(0.05)
    null = run_gof(EXP_TRUE, data, cfg)
    bad = ExpHawkesModel(2 * EXP_TRUE.mu, EXP_TRUE.A, EXP_TRUE.beta)
    corrupt = run_gof(bad, data, cfg)
    secs = time.perf_counter() - t0
    pn = subsample_size(9)
    checks = {
        "p_n": pn == 4 and null.p_n == 4,
        "quantile": abs(q - 1.3581) <= 1e-3,
        "null": bool(np.all(null.acceptance_rates >= 0.80)),
        "corrupt": bool(np.all(corrupt.acceptance_rates <= 0.2)),
        "time": secs <= 60,
    }
    record(
        4,
        all(checks.values()),
        f"p_n={pn} q={q:.4f} null={np.round(null.acceptance_rates, 2).tolist()} "
        f"mu*2={np.round(corrupt.acceptance_rates, 2).tolist()} time={secs:.1f}s failed={[k for k, v in checks.items() if not v]}",
    )
    assert all(checks.values())


def test_5_time_rescaling():
    passed = 0
    for seed in range(100):
        trial = simulate_trial(EXP_TRUE, 100.0, trial_rng(seed, 0))
        gaps = np.concatenate([np.diff(compensator(EXP_TRUE, trial, j, ev)) for j, ev in enumerate(trial) if ev.size > 1])
        passed += stats.kstest(gaps, "expon").pvalue > 0.01
    record(5, passed >= 95, f"{passed}/100 seeds pass KS at level 0.01")
    assert passed >= 95


POISSON3 = ExpHawkesModel(np.ones(3), np.zeros((3, 3)), 1.0)
JD_TRUE = jd.JumpDiffusionModel(
    b=lambda x: -2 * (x + 45),
    sigma=lambda x: np.full(np.shape(x), 0.5),
    a=lambda x: np.full(np.shape(x), 2.0),
    driver=POISSON3,
)


@pytest.fixture(scope="module")
def jd_fit():
    t0 = time.perf_counter()
    path, spikes = jd.simulate_path(JD_TRUE, -45.0, 1e-3, 13.0, seed=3)
    fitted = jd.fit_jumpdiff(path, spikes, POISSON3)
    return path, spikes, fitted, time.perf_counter() - t0


def test_6_jumpdiff_round_trip(jd_fit):
    path, _, fc, secs = jd_fit
    s2 = fc.sigma2_const
    # the linear jump-size approximation evaluated at the occupancy-weighted mean state
    keep = ~fc.a2_hat.mask
    xbar = np.average(fc.a2_hat.centers[keep], weights=fc.a2_hat.counts[keep])
    a_hat = fc.a_lin[0] * xbar + fc.a_lin[1]
    slope = fc.b_lin[0]
    ok = 0.15 <= s2 <= 0.40 and 1.5 <= a_hat <= 2.5 and -3.0 <= slope <= -1.0 and secs <= 180
    record(6, ok, f"sigma2={s2:.3f} a_hat={a_hat:.3f} b slope={slope:.3f} time={secs:.1f}s")
    assert ok


def test_7_depth_exchangeability(jd_fit):
    path, spikes, fc, _ = jd_fit
    plain = jd.fit_diffusion(path)
    real = jd.regenerate(fc, POISSON3, T=13.0, dt=1e-3, seed=12345)[0]
    dx = np.diff(real.values)
    jump_share = float(np.sum(dx[np.abs(dx) > 1.0] ** 2) / np.sum(dx**2))
    rep = depth_validation(
        real,
        lambda s, n: jd.regenerate(fc, POISSON3, 13.0, 1e-3, (-55.0, -35.0), s, n),
        lambda s, n: jd.regenerate(plain, None, 13.0, 1e-3, (-55.0, -35.0), s, n),
        n_rep=100,
        n_mc=50,
        seed=0,
    )
    own = np.asarray(rep["jumps"].ranks)
    other = np.asarray(rep["no_jumps"].ranks)
    in_band = int(np.sum((own >= 10) & (own <= 90)))
    low = int(np.sum(other <= 5))
    part1 = in_band >= 45
    part2 = jump_share < 0.3 or low >= 45
    ok = part1 and part2
    record(
        7,
        ok,
        f"own-sample ranks in [10,90]: {in_band}/50 (median {np.median(own):.0f}); "
        f"diffusion-sample ranks <=5: {low}/50 (median {np.median(other):.0f}); jump share of QV={jump_share:.2f}",
    )
    assert ok


def test_8_determinism(tmp_path):
    fast = ["depth.mc=3", "depth.nrep=30", "gof.subsamples=30", "regenerate.paths=3"]

    def run(sub, threads):
        cfg = apply_overrides(loads_toml(bundled_config()), fast)
        manifest = run_pipeline(cfg, tmp_path / sub, threads=threads)
        return {s["name"]: s["outputs"] for s in manifest["stages"]}, (tmp_path / sub / "manifest.json").read_bytes()

    a, ma = run("a", 1)
    b, mb = run("b", 1)
    c, _ = run("c", 2)
    rerun = a == b and ma == mb
    threads = a == c
    record(8, rerun and threads, f"rerun identical={rerun} threads 1 vs 2 identical={threads} stages={len(a)}")
    assert rerun and threads
