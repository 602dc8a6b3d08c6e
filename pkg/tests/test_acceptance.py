"""Acceptance gate: one test per release criterion, each printing a
single PASS/FAIL line with the measured quantity next to its threshold.

The six-mode recognition run (criteria 8, 9, 11) and the single-oscillator
run (criterion 7) train real models and take several minutes each; the
remaining criteria are quick numerical checks.
"""

import os
import time
from pathlib import Path

import numpy as np

from conftest import (
    MODE_SETS,
    SixModeParams,
    record_criterion,
    run_six_modes_pipeline,
)
from oracles import enumerate_emd
from ringmodes.cli import main as cli_main
from ringmodes.latent import (
    GridDistribution,
    KdeConfig,
    gkde,
    hull_overlap_area,
    kde_density,
    scott_bandwidth,
    scott_factor,
)
from ringmodes.nn_core import numeric_gradient
from ringmodes.transport import emd_exact, emd_sinkhorn
from ringmodes.vae import ArchConfig, BiLstmVae, vae_loss


def _eighth_masses(rng, g):
    counts = rng.multinomial(8, np.full(g * g, 1.0 / (g * g)))
    return GridDistribution(masses=counts.reshape(g, g) / 8.0)


def _random_grid(rng, g):
    m = rng.uniform(size=(g, g))
    return GridDistribution(masses=m / m.sum())


def test_criterion_01_gradient_fidelity():
    t0 = time.perf_counter()
    arch = ArchConfig(n_features=6, window=3, hidden1=6, hidden2=4, dense=8, beta=0.5)
    model = BiLstmVae(arch, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    xs = rng.normal(size=(2, 3, 6))
    zeta = rng.normal(size=(2, 2))

    _, _, _, grads = model.loss_and_grads(xs, zeta)
    params = model.param_arrays()

    def loss():
        total, _, _, _ = model.loss_and_grads(xs, zeta)
        return total

    numeric = numeric_gradient(loss, params, step=1e-5)
    worst = 0.0
    for g, n in zip(grads, numeric):
        scale = max(np.abs(g).max(), np.abs(n).max(), 1e-6)
        worst = max(worst, float(np.abs(g - n).max() / scale))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 30.0
    record_criterion(
        "criterion 01 gradient fidelity",
        ok,
        f"max relative error {worst:.3e} (< 1e-4), {elapsed:.1f}s (< 30s)",
    )
    assert ok


def test_criterion_02_emd_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(200):
        g = int(rng.integers(1, 4))
        p = _eighth_masses(rng, g)
        q = _eighth_masses(rng, g)
        got, _ = emd_exact(p, q)
        want = enumerate_emd(p, q, denominator=8)
        worst = max(worst, abs(got - want))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 60.0
    record_criterion(
        "criterion 02 EMD exactness",
        ok,
        f"200 pairs up to 3x3, max |emd - oracle| {worst:.2e} (<= 1e-9), "
        f"{elapsed:.1f}s (< 60s)",
    )
    assert ok


def test_criterion_03_metric_axioms():
    rng = np.random.default_rng(3)
    worst_sym = 0.0
    worst_tri = 0.0
    for _ in range(100):
        p, q, r = (_random_grid(rng, 5) for _ in range(3))
        d_pq, _ = emd_exact(p, q)
        d_qp, _ = emd_exact(q, p)
        d_qr, _ = emd_exact(q, r)
        d_pr, _ = emd_exact(p, r)
        worst_sym = max(worst_sym, abs(d_pq - d_qp))
        worst_tri = max(worst_tri, d_pr - (d_pq + d_qr))
    ok = worst_sym <= 1e-9 and worst_tri <= 1e-9
    record_criterion(
        "criterion 03 metric axioms",
        ok,
        f"100 triples on 5x5: max symmetry gap {worst_sym:.2e}, "
        f"max triangle violation {worst_tri:.2e} (both <= 1e-9)",
    )
    assert ok


def test_criterion_04_sinkhorn_accuracy():
    rng = np.random.default_rng(4)
    worst_rel = 0.0
    for _ in range(50):
        p = _random_grid(rng, 8)
        q = _random_grid(rng, 8)
        exact, _ = emd_exact(p, q)
        approx = emd_sinkhorn(p, q, epsilon=1e-3, tol=1e-6)
        worst_rel = max(worst_rel, abs(approx - exact) / exact)

    pts = np.clip(rng.normal([[0.35, 0.5]], 0.12, size=(400, 2)), 0.0, 1.0)
    smooth = gkde(pts, KdeConfig(grid_size=100))
    self_dist = emd_sinkhorn(smooth, smooth, epsilon=1e-3, tol=1e-6)
    ok = worst_rel < 0.02 and self_dist < 1e-3
    record_criterion(
        "criterion 04 sinkhorn accuracy",
        ok,
        f"50 8x8 pairs: worst relative error {worst_rel:.4f} (< 0.02); "
        f"100x100 self-distance {self_dist:.2e} (< 1e-3)",
    )
    assert ok


def test_criterion_05_kde_correctness():
    rng = np.random.default_rng(5)
    pts = rng.uniform(0.15, 0.85, size=(200, 2))
    h = scott_bandwidth(pts)
    centers = (np.arange(100) + 0.5) / 100.0
    dens = kde_density(pts, h, centers, centers)
    integral = float(dens.sum()) / (100 * 100)

    factor = scott_factor(100)
    factor_err = abs(factor - 100.0 ** (-1.0 / 6.0))
    ok = abs(integral - 1.0) <= 2e-2 and factor_err <= 1e-6
    record_criterion(
        "criterion 05 KDE correctness",
        ok,
        f"grid quadrature of raw density {integral:.4f} (within 2e-2 of 1); "
        f"Scott factor error {factor_err:.1e} (<= 1e-6)",
    )
    assert ok


def test_criterion_06_kl_closed_form():
    x = np.zeros((1, 2, 3))
    mu = np.array([[1.0, 0.0]])
    logvar = np.zeros((1, 2))
    _, _, kl = vae_loss(x, x, mu, logvar, beta=1.0)
    ok = kl == 0.5
    record_criterion(
        "criterion 06 KL closed form",
        ok,
        f"KL(mu=(1,0), logvar=0) = {kl!r} (exactly 0.5)",
    )
    assert ok


def test_criterion_07_limit_cycle_closure():
    from run_single_oscillator import run as single_run

    fraction, diameter, train_s = single_run(seed=0, quiet=True)
    ok = fraction >= 0.90 and train_s <= 300.0
    record_criterion(
        "criterion 07 limit-cycle closure",
        ok,
        f"closure fraction {fraction:.3f} (>= 0.90 within 5% of diameter "
        f"{diameter:.2f}); training {train_s:.0f}s (<= 300s)",
    )
    assert ok


def test_criterion_08_mode_recognition(six_mode_run):
    run = six_mode_run
    labels = run.labels
    predictions = [labels[int(np.argmin(run.wd[:, j]))] for j in range(len(labels))]
    correct = sum(p == l for p, l in zip(predictions, labels))
    diag_ok = all(
        run.wd[i, i] < np.min(np.delete(run.wd[i], i)) for i in range(len(labels))
    )
    ok = correct == 6 and diag_ok and run.pipeline_seconds <= 1200.0
    record_criterion(
        "criterion 08 mode recognition",
        ok,
        f"{correct}/6 correct, diagonal strictly smallest per row: {diag_ok}, "
        f"end-to-end {run.pipeline_seconds:.0f}s (<= 1200s)",
    )
    assert ok, f"predictions {predictions} vs {labels}, wd=\n{run.wd}"


def test_criterion_09_method_ordering(six_mode_run):
    run = six_mode_run
    ok = run.mse_bilstm < run.mse_mlp < run.mse_pca
    record_criterion(
        "criterion 09 method ordering",
        ok,
        f"test MSE: recurrent {run.mse_bilstm:.4f} < flat {run.mse_mlp:.4f} "
        f"< pca {run.mse_pca:.4f}: {ok}",
    )
    assert ok


_DET_CONFIG = """\
[run]
seed = 0
[ring]
n_nodes = 3
n_sensors_per_node = 1
n_vars_per_sensor = 1
sample_rate = 50
duration = 1.6
[mode.a]
missing =
[mode.b]
missing = 1
[windows]
length = 8
stride = 4
[arch]
hidden1 = 4
hidden2 = 3
dense = 6
beta = 0.01
[train]
max_epochs = 2
patience = 2
[kde]
grid_size = 8
[classify]
backend = exact
"""


def test_criterion_10_determinism(tmp_path):
    cfg = tmp_path / "det.cfg"
    cfg.write_text(_DET_CONFIG)

    def one_pass(root: Path) -> dict:
        data, run = root / "data", root / "run"
        assert cli_main(["--config", str(cfg), "simulate", "--out", str(data)]) == 0
        assert cli_main(
            ["--config", str(cfg), "train", "--data", str(data), "--out", str(run)]
        ) == 0
        assert cli_main([
            "--config", str(cfg), "embed", "--data", str(data),
            "--checkpoint", str(run / "bilstm_vae.ckpt"), "--out", str(run),
        ]) == 0
        assert cli_main([
            "--config", str(cfg), "kde",
            "--trajectories", str(run / "traj_*.csv"), "--out", str(run),
        ]) == 0
        assert cli_main([
            "--config", str(cfg), "classify",
            "--benchmarks", str(run / "kde_*_bench.csv"),
            "--tests", str(run / "kde_*_test.csv"), "--out", str(run),
        ]) == 0
        return {p.relative_to(root): p.read_bytes() for p in root.rglob("*.csv")}

    first = one_pass(tmp_path / "one")
    second = one_pass(tmp_path / "two")
    assert set(first) == set(second)
    mismatched = sorted(str(k) for k in first if first[k] != second[k])
    ok = not mismatched
    record_criterion(
        "criterion 10 determinism",
        ok,
        f"{len(first)} CSVs byte-identical across a same-seed pipeline rerun"
        + ("" if ok else f"; mismatched: {mismatched}"),
    )
    assert ok


def _pairwise_overlaps(points_by_mode: dict) -> list:
    labels = list(points_by_mode)
    out = []
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            area = hull_overlap_area(points_by_mode[labels[i]], points_by_mode[labels[j]])
            if area > 1e-12:
                out.append((labels[i], labels[j], round(area, 4)))
    return out


def test_criterion_11_latent_separation(six_mode_run):
    run = six_mode_run
    pooled = {
        k: np.vstack([run.bench_points[k], run.test_points[k]]) for k in run.labels
    }
    overlaps = _pairwise_overlaps(pooled)
    if not overlaps:
        record_criterion(
            "criterion 11 latent separation",
            True,
            "all 15 hull pairs disjoint on the recognition run; overlap area = 0",
        )
        return

    # seed-0 hulls intersect: the criterion falls back to a five-seed sweep
    # and passes when at least three seeds give fully disjoint hulls
    disjoint_seeds = []
    for seed in range(5):
        if seed == run.params.seed:
            seed_overlaps = overlaps
        else:
            sweep = run_six_modes_pipeline(
                SixModeParams(seed=seed), with_baselines=False
            )
            sweep_pooled = {
                k: np.vstack([sweep.bench_points[k], sweep.test_points[k]])
                for k in sweep.labels
            }
            seed_overlaps = _pairwise_overlaps(sweep_pooled)
        if not seed_overlaps:
            disjoint_seeds.append(seed)
    ok = len(disjoint_seeds) >= 3
    record_criterion(
        "criterion 11 latent separation",
        ok,
        f"seed-0 hulls overlap ({len(overlaps)} of 15 pairs, e.g. {overlaps[:2]}); "
        f"five-seed sweep: disjoint on seeds {disjoint_seeds} "
        f"({len(disjoint_seeds)}/5, need >= 3)",
    )
    assert ok
