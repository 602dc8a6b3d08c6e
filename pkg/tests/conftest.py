"""Shared fixtures: the expensive end-to-end runs used by the acceptance
tests, plus a terminal summary that prints one line per criterion."""

import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "scripts"))

from ringmodes.baselines import MlpConfig, MlpVae, pca_fit, pca_reconstruct, pca_transform
from ringmodes.latent import (
    KdeConfig,
    apply_frame,
    block_pool,
    embed_dataset,
    gkde,
    joint_frame,
)
from ringmodes.synth import (
    RingConfig,
    TimeSeriesDataset,
    apply_normalization,
    make_windows,
    simulate_ring,
    stats_from_values,
)
from ringmodes.train import TrainConfig, train
from ringmodes.transport import wd_matrix
from ringmodes.vae import ArchConfig, BiLstmVae

_CRITERIA: list[tuple[str, bool, str]] = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    _CRITERIA.append((name, ok, detail))
    print(f"{name}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'} - {detail}")


# ---------------------------------------------------------------------------
# six-mode end-to-end run (one pooled model over all ring configurations)

MODE_SETS = {
    "full": frozenset(),
    "m1": frozenset({1}),
    "m12": frozenset({1, 2}),
    "m13": frozenset({1, 3}),
    "m14": frozenset({1, 4}),
    "m15": frozenset({1, 5}),
}


@dataclass(frozen=True)
class SixModeParams:
    seed: int = 0
    duration: float = 12.0
    settle: float = 6.0
    window: int = 16
    stride: int = 4
    eval_fraction: float = 0.3
    hidden1: int = 20
    hidden2: int = 12
    dense: int = 32
    beta: float = 1e-3
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 800
    patience: int = 120
    grid_size: int = 100
    pool: int = 2
    epsilon: float = 1e-3
    sinkhorn_tol: float = 1e-4
    max_iter: int = 300000


@dataclass
class SixModeRun:
    params: SixModeParams
    wd: np.ndarray
    labels: list
    bench_points: dict
    test_points: dict
    pipeline_seconds: float
    mse_bilstm: float = float("nan")
    mse_mlp: float = float("nan")
    mse_pca: float = float("nan")
    history: object = None
    extras: dict = field(default_factory=dict)


def run_six_modes_pipeline(p: SixModeParams, with_baselines: bool = True) -> SixModeRun:
    """simulate -> pooled train -> embed -> KDE -> WD matrix, wall-clocked.

    Baseline reconstruction errors are computed after the clock stops;
    they belong to the method-ordering check, not the recognition run.
    """
    t0 = time.perf_counter()
    datasets = {}
    for i, (label, missing) in enumerate(MODE_SETS.items()):
        cfg = RingConfig(
            missing=missing,
            duration=p.duration + p.settle,
            seed=p.seed + i,
            mode_label=label,
        )
        ds = simulate_ring(cfg)
        # some initial conditions approach the attractor slowly; keep only
        # the settled tail so the held-out segment matches the training one
        skip = int(round(p.settle * cfg.sample_rate))
        datasets[label] = TimeSeriesDataset(
            values=ds.values[skip:],
            column_names=ds.column_names,
            sample_rate=ds.sample_rate,
            mode_label=ds.mode_label,
        )
    n_rows = next(iter(datasets.values())).values.shape[0]
    split_row = int((1.0 - p.eval_fraction) * n_rows)
    stats = stats_from_values([ds.values[:split_row] for ds in datasets.values()])
    normalized = {k: apply_normalization(ds, stats) for k, ds in datasets.items()}

    bench_windows, test_windows = {}, {}
    for label, ds in normalized.items():
        wins = make_windows(ds, p.window, p.stride)
        bench_windows[label] = [w for w in wins if w.start_index + p.window <= split_row]
        test_windows[label] = [w for w in wins if w.start_index >= split_row]
    train_set = [w for label in MODE_SETS for w in bench_windows[label]]
    n_features = train_set[0].data.shape[1]

    arch = ArchConfig(
        n_features=n_features, window=p.window, hidden1=p.hidden1,
        hidden2=p.hidden2, dense=p.dense, beta=p.beta,
    )
    model = BiLstmVae(arch, np.random.default_rng(p.seed))
    tcfg = TrainConfig(
        batch_size=p.batch_size, max_epochs=p.max_epochs, patience=p.patience,
        learning_rate=p.learning_rate, seed=p.seed,
    )
    model, history = train(model, train_set, tcfg)

    bench_traj = {k: embed_dataset(model, v, mode_label=k) for k, v in bench_windows.items()}
    test_traj = {k: embed_dataset(model, v, mode_label=k) for k, v in test_windows.items()}
    frame = joint_frame(
        [t.points for t in bench_traj.values()] + [t.points for t in test_traj.values()]
    )
    kcfg = KdeConfig(grid_size=p.grid_size)
    benchmarks = [
        (k, block_pool(gkde(apply_frame(bench_traj[k].points, *frame), kcfg), p.pool))
        for k in MODE_SETS
    ]
    tests = [
        (k, block_pool(gkde(apply_frame(test_traj[k].points, *frame), kcfg), p.pool))
        for k in MODE_SETS
    ]
    wd = wd_matrix(
        benchmarks, tests, backend="sinkhorn",
        epsilon=p.epsilon, tol=p.sinkhorn_tol, max_iter=p.max_iter,
    )
    elapsed = time.perf_counter() - t0

    run = SixModeRun(
        params=p,
        wd=wd.values,
        labels=list(MODE_SETS),
        bench_points={k: bench_traj[k].points for k in MODE_SETS},
        test_points={k: test_traj[k].points for k in MODE_SETS},
        pipeline_seconds=elapsed,
        history=history,
    )
    if not with_baselines:
        return run

    eval_windows = [w for label in MODE_SETS for w in test_windows[label]]
    xs_eval = np.stack([w.data for w in eval_windows])
    xs_train = np.stack([w.data for w in train_set])
    rec = np.stack([model.reconstruct(w.data) for w in eval_windows])
    run.mse_bilstm = float(np.mean((rec - xs_eval) ** 2))

    mlp = MlpVae(
        MlpConfig(n_features=n_features, window=p.window, beta=p.beta),
        np.random.default_rng(p.seed),
    )
    mlp_cfg = TrainConfig(
        batch_size=p.batch_size, max_epochs=min(p.max_epochs, 400),
        patience=p.patience, learning_rate=p.learning_rate, seed=p.seed,
    )
    mlp, _ = train(mlp, train_set, mlp_cfg)
    mlp_rec = np.stack([mlp.reconstruct(w.data) for w in eval_windows])
    run.mse_mlp = float(np.mean((mlp_rec - xs_eval) ** 2))

    flat_train = xs_train.reshape(len(xs_train), -1)
    flat_eval = xs_eval.reshape(len(xs_eval), -1)
    pca = pca_fit(flat_train, n_components=2)
    pca_rec = pca_reconstruct(pca, pca_transform(pca, flat_eval))
    run.mse_pca = float(np.mean((pca_rec - flat_eval) ** 2))
    return run


@pytest.fixture(scope="session")
def six_mode_run() -> SixModeRun:
    return run_six_modes_pipeline(SixModeParams())
