"""Acceptance criteria, each checked at its stated tolerance.

Every test records a single PASS/FAIL line (shown with ``-s`` and in the
terminal summary). Criterion 9 only runs when ``OLINEAR_ETTH1`` points at
the public ETTh1 CSV.
"""
import filecmp
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from olinear.cli import cmd_train
from olinear.config import load_run_config
from olinear.data import CsvSchema, from_array, lagged_temporal_corr, load_csv, make_windows
from olinear.evaluation import (
    conditional_gaussian_mean,
    finite_difference_check,
    flops_estimate,
    mean_forecast,
    metrics,
    persistence_forecast,
)
from olinear.linalg import orthogonality_error
from olinear.model import NORMS, TRANSFORMS, VARIANTS, OLinearConfig, backward, forward, init_params, normlin_weight, softmax_rows
from olinear.pipeline import prepare_bases
from olinear.synthetic import ar1, sinusoid, write_csv
from olinear.train import TrainConfig, evaluate_windows, train
from olinear.transform import apply_temporal, build_basis, invert_temporal


def ar1_generator(n_steps=20000, seed=20240):
    """The shared AR(1) generator: rho 0.7, three variates."""
    return from_array(ar1(n_steps, 3, 0.7, np.random.default_rng(seed)), 0.7, 0.1)


def fit_and_test(ds, mc, tc):
    b = prepare_bases(ds, mc)
    res = train(ds, mc, tc, b.q_in, b.q_out, b.corr_weight)
    tw = make_windows(ds, "test", mc.lookback, mc.horizon)
    return evaluate_windows(res.params, mc, tw)[0], tw


def test_c01_gradient_suite(acceptance_log):
    t0 = time.perf_counter()
    worst, where = 0.0, ""
    for variant in VARIANTS:
        for transform in TRANSFORMS:
            for norm in NORMS:
                cfg = OLinearConfig(n_variates=2, lookback=8, horizon=4, embed_size=2, model_dim=8, n_blocks=1,
                                    normlin_transform=transform, normlin_norm=norm, variant=variant)
                rng = np.random.default_rng(0)
                q_in = np.linalg.qr(rng.standard_normal((8, 8)))[0]
                q_out = np.linalg.qr(rng.standard_normal((4, 4)))[0]
                p = init_params(cfg, rng, q_in, q_out, softmax_rows(rng.uniform(-1, 1, (2, 2))))
                # move away from the symmetric initial point so every path carries signal
                for k, v in p.tensors.items():
                    v[...] = rng.standard_normal(v.shape) * (0.5 if v.ndim > 1 else 0.3) + (1.0 if k.endswith("ln_g") else 0.0)
                x = rng.standard_normal((3, 2, 8)).cumsum(-1)
                g = rng.standard_normal((3, 2, 4))

                def closure():
                    pred, cache = forward(x, p, cfg)
                    return float(np.sum(pred * g)), backward(cache, g)

                name, err = finite_difference_check(closure, p.tensors, step=1e-6).worst()
                if err > worst:
                    worst, where = err, f"{variant}/{transform}+{norm}/{name}"
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-5 and elapsed < 30
    acceptance_log("C1 gradient suite", ok, f"max rel err {worst:.2e} at {where}, {elapsed:.1f}s")
    assert ok


def test_c02_diagonalization(acceptance_log):
    t0 = time.perf_counter()
    ds = ar1_generator()
    corr = lagged_temporal_corr(ds, 24)
    b = build_basis(corr, "eigen", 24)
    d = b.q.T @ corr.matrix @ b.q
    off = float(np.max(np.abs(d - np.diag(np.diag(d)))))
    diag = float(np.max(np.abs(np.diag(d) - b.eigenvalues)))
    elapsed = time.perf_counter() - t0
    ok = off <= 1e-9 and diag <= 1e-9 and elapsed < 5
    acceptance_log("C2 diagonalization", ok, f"off-diag {off:.1e}, diag-vs-eigenvalues {diag:.1e}, {elapsed:.2f}s")
    assert ok


def test_c03_row_stochastic(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    min_entry, worst_sum = math.inf, 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 33))
        m = normlin_weight(rng.normal(0, 3, (n, n)), "softplus", "l1")
        min_entry = min(min_entry, float(m.min()))
        worst_sum = max(worst_sum, float(np.max(np.abs(m.sum(axis=1) - 1))))
    elapsed = time.perf_counter() - t0
    ok = min_entry > 0 and worst_sum <= 1e-12 and elapsed < 5
    acceptance_log("C3 row-stochastic NormLin", ok, f"min entry {min_entry:.2e}, max |row sum - 1| {worst_sum:.1e}, {elapsed:.2f}s")
    assert ok


def test_c04_orthogonality_round_trip(acceptance_log):
    t0 = time.perf_counter()
    ds = ar1_generator()
    rng = np.random.default_rng(4)
    ortho = trip = 0.0
    for n in (12, 24, 96):
        for method in ("eigen", "fourier", "identity"):
            corr = lagged_temporal_corr(ds, n) if method == "eigen" else None
            b = build_basis(corr, method, n)
            x = rng.standard_normal((8, 3, n))
            ortho = max(ortho, orthogonality_error(b.q))
            trip = max(trip, float(np.max(np.abs(invert_temporal(apply_temporal(x, b), b) - x))))
    elapsed = time.perf_counter() - t0
    ok = ortho <= 1e-10 and trip <= 1e-10 and elapsed < 5
    acceptance_log("C4 orthogonality and round trip", ok, f"max |QtQ - I| {ortho:.1e}, round trip {trip:.1e}, {elapsed:.2f}s")
    assert ok


def test_c05_flops(acceptance_log):
    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(10):
        n, d, h = (int(v) for v in (rng.integers(1, 1000), rng.integers(1, 1024), rng.integers(1, 17)))
        # expanded by hand: N^2 D + 2 N D^2 and 2 N^2 D + 4 N D^2, written as repeated sums
        normlin = n * n * d + n * d * d + n * d * d
        mhsa = n * n * d + n * n * d + 4 * n * d * d
        f = flops_estimate(n, d, h)
        mismatches += (f.normlin_module != normlin) + (f.mhsa != mhsa)
    ok = mismatches == 0
    acceptance_log("C5 FLOPs formulas", ok, f"{mismatches} mismatches over 10 triples")
    assert ok


def test_c06_conditional_mean_oracle(acceptance_log):
    """Regressing y on x over joint Gaussian draws estimates E[y | x] at any point;
    the check compares it with the closed form in units of its standard error."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst_z = 0.0
    for k in (1, 2, 3, 4, 4):
        a = rng.standard_normal((k + 1, k + 1))
        cov = a @ a.T + 0.3 * np.eye(k + 1)
        mu = rng.standard_normal(k + 1)
        draws = rng.multivariate_normal(mu, cov, size=1_000_000, method="cholesky")
        xs, ys = draws[:, :k], draws[:, k]
        design = np.hstack([np.ones((xs.shape[0], 1)), xs])
        coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
        resid = ys - design @ coef
        sigma2 = resid @ resid / (ys.size - k - 1)
        x0 = mu[:k] + rng.standard_normal(k)
        x0t = np.concatenate([[1.0], x0])
        se = math.sqrt(sigma2 * x0t @ np.linalg.solve(design.T @ design, x0t))
        mc = float(x0t @ coef)
        exact = conditional_gaussian_mean(mu[:k], mu[k], cov[:k, :k], cov[:k, k], x0)
        worst_z = max(worst_z, abs(exact - mc) / se)
    elapsed = time.perf_counter() - t0
    ok = worst_z <= 3 and elapsed < 60
    acceptance_log("C6 conditional-mean oracle", ok, f"max |z| {worst_z:.2f} over 5 instances, {elapsed:.1f}s")
    assert ok


def test_c07_learning_sanity(acceptance_log):
    t0 = time.perf_counter()
    ds = from_array(sinusoid(5000, 2, 24, np.random.default_rng(7), snr=10), 0.7, 0.1)
    mc = OLinearConfig(n_variates=2, lookback=48, horizon=24, embed_size=4, model_dim=32, n_blocks=1)
    tc = TrainConfig(learning_rate=5e-4, batch_size=32, max_epochs=20, patience=5, seed=1, loss="mse")
    rep, tw = fit_and_test(ds, mc, tc)
    persist = metrics(persistence_forecast(tw.inputs, 24), tw.targets).mse
    mean = metrics(mean_forecast(tw.inputs, 24), tw.targets).mse
    elapsed = time.perf_counter() - t0
    ok = rep.mse < persist and rep.mse < mean and elapsed < 120
    acceptance_log("C7 learning sanity", ok,
                   f"test MSE {rep.mse:.4f} vs persistence {persist:.4f}, mean {mean:.4f}, {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_c08_ablation_direction(acceptance_log):
    t0 = time.perf_counter()
    ds = ar1_generator()
    tc = TrainConfig(learning_rate=1e-4, batch_size=32, max_epochs=10, patience=3, seed=2024)
    scores = {}
    for method in ("eigen", "identity"):
        mc = OLinearConfig(n_variates=3, lookback=24, horizon=12, embed_size=16, model_dim=64, n_blocks=1,
                           basis_method=method)
        scores[method] = fit_and_test(ds, mc, tc)[0].mse
    elapsed = time.perf_counter() - t0
    ok = scores["eigen"] <= scores["identity"]
    acceptance_log("C8 ablation direction", ok,
                   f"eigen test MSE {scores['eigen']:.5f} vs identity {scores['identity']:.5f}, {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_c09_etth1_informational(acceptance_log):
    path = os.environ.get("OLINEAR_ETTH1")
    if not path or not Path(path).is_file():
        acceptance_log("C9 ETTh1 reproduction", None, "skipped: set OLINEAR_ETTH1 to the ETTh1 CSV to run")
        pytest.skip("OLINEAR_ETTH1 not set")
    t0 = time.perf_counter()
    # the standard ETT protocol: 12/4/4 months of hourly data
    ds = load_csv(path, CsvSchema(train_ratio=0.6, val_ratio=0.2, min_train_steps=192))
    mc = OLinearConfig(n_variates=ds.n_variates, lookback=96, horizon=96, embed_size=16, model_dim=256, n_blocks=2)
    tc = TrainConfig(learning_rate=5e-4, max_epochs=int(os.environ.get("OLINEAR_ETTH1_EPOCHS", "10")), patience=3)
    # metrics on z-scored data, using training statistics, as the benchmark reports them
    train_vals = ds.split_values("train")
    z = (ds.values - train_vals.mean(axis=1, keepdims=True)) / train_vals.std(axis=1, keepdims=True)
    ds = from_array(z, 0.6, 0.2, ds.names)
    rep, _ = fit_and_test(ds, mc, tc)
    acceptance_log("C9 ETTh1 reproduction", None,
                   f"test MSE {rep.mse:.4f}, reference 0.360, gap {rep.mse - 0.360:+.4f}, {time.perf_counter() - t0:.0f}s")


def test_c10_determinism(acceptance_log, tmp_path):
    values = sinusoid(1000, 2, 24, np.random.default_rng(10), snr=10)
    data = tmp_path / "series.csv"
    write_csv(data, values, ["a", "b"])
    runs = []
    for tag in ("a", "b"):
        cfg = load_run_config(None, [f"data={data}", f"output_dir={tmp_path / tag}", "lookback=48", "horizon=24",
                                     "embed_size=4", "model_dim=16", "max_epochs=3", "patience=3"])
        cmd_train(cfg)
        runs.append(tmp_path / tag)
    same = [filecmp.cmp(runs[0] / f, runs[1] / f, shallow=False) for f in ("checkpoint.olck", "history.csv")]
    ok = all(same)
    acceptance_log("C10 determinism", ok, f"checkpoint identical: {same[0]}, history identical: {same[1]}")
    assert ok
