"""End-to-end six-mode benchmark: simulate, train pooled, embed, classify.

Simulates the full ring plus five missing-node variants, trains one
Bi-LSTM-VAE on the pooled leading windows, embeds benchmark and held-out
windows, builds per-mode latent KDEs, and prints the Wasserstein distance
matrix with the resulting classification.  Also reports baseline MSEs and
convex-hull overlaps so the run doubles as a quick health check.

Defaults reproduce the recognition benchmark in the acceptance suite
(about 16 minutes on one core); pass --max-epochs 60 --patience 15 for a
coarse smoke run.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ringmodes.baselines import MlpConfig, MlpVae, pca_fit, pca_reconstruct, pca_transform
from ringmodes.latent import (
    KdeConfig,
    block_pool,
    embed_dataset,
    gkde,
    hull_overlap_area,
    joint_frame,
    apply_frame,
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

MODES = {
    "full": frozenset(),
    "m1": frozenset({1}),
    "m12": frozenset({1, 2}),
    "m13": frozenset({1, 3}),
    "m14": frozenset({1, 4}),
    "m15": frozenset({1, 5}),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--duration", type=float, default=12.0)
    ap.add_argument("--settle", type=float, default=6.0,
                    help="extra leading seconds simulated and discarded")
    ap.add_argument("--window", type=int, default=16)
    ap.add_argument("--stride", type=int, default=4)
    ap.add_argument("--eval-fraction", type=float, default=0.3)
    ap.add_argument("--beta", type=float, default=1e-3)
    ap.add_argument("--hidden1", type=int, default=20)
    ap.add_argument("--hidden2", type=int, default=12)
    ap.add_argument("--dense", type=int, default=32)
    ap.add_argument("--learning-rate", type=float, default=1e-3)
    ap.add_argument("--max-epochs", type=int, default=800)
    ap.add_argument("--patience", type=int, default=120)
    ap.add_argument("--batch-size", type=int, default=64)
    ap.add_argument("--epsilon", type=float, default=1e-3)
    ap.add_argument("--tol", type=float, default=1e-4)
    ap.add_argument("--pool", type=int, default=2,
                    help="block-pool factor applied to the KDE grids before solving")
    ap.add_argument("--skip-baselines", action="store_true")
    args = ap.parse_args(argv)

    t_start = time.time()
    rng_offset = {label: i for i, label in enumerate(MODES)}

    # simulate each mode, drop the slow-settling head, and z-score with
    # stats pooled over the training rows
    datasets = {}
    for label, missing in MODES.items():
        cfg = RingConfig(
            missing=missing,
            duration=args.duration + args.settle,
            seed=args.seed + rng_offset[label],
            mode_label=label,
        )
        ds = simulate_ring(cfg)
        skip = int(round(args.settle * cfg.sample_rate))
        datasets[label] = TimeSeriesDataset(
            values=ds.values[skip:],
            column_names=ds.column_names,
            sample_rate=ds.sample_rate,
            mode_label=ds.mode_label,
        )
    n_rows = next(iter(datasets.values())).values.shape[0]
    split_row = int((1.0 - args.eval_fraction) * n_rows)
    stats = stats_from_values([ds.values[:split_row] for ds in datasets.values()])
    normalized = {k: apply_normalization(ds, stats) for k, ds in datasets.items()}
    print(f"[{time.time()-t_start:6.1f}s] simulated {len(MODES)} modes, "
          f"{n_rows} rows each, split at {split_row}", flush=True)

    bench_windows = {}
    test_windows = {}
    for label, ds in normalized.items():
        wins = make_windows(ds, args.window, args.stride)
        bench_windows[label] = [w for w in wins if w.start_index + args.window <= split_row]
        test_windows[label] = [w for w in wins if w.start_index >= split_row]
    train_set = [w for label in MODES for w in bench_windows[label]]
    n_features = train_set[0].data.shape[1]
    print(f"[{time.time()-t_start:6.1f}s] windows: train {len(train_set)}, "
          f"test {sum(len(v) for v in test_windows.values())}, F={n_features}", flush=True)

    arch = ArchConfig(
        n_features=n_features,
        window=args.window,
        hidden1=args.hidden1,
        hidden2=args.hidden2,
        dense=args.dense,
        beta=args.beta,
    )
    model = BiLstmVae(arch, np.random.default_rng(args.seed))
    tcfg = TrainConfig(
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        learning_rate=args.learning_rate,
        seed=args.seed,
    )
    t0 = time.time()
    _, history = train(model, train_set, tcfg)
    print(f"[{time.time()-t_start:6.1f}s] trained: {len(history.train_loss)} epochs "
          f"in {time.time()-t0:.1f}s, best val {history.best_val_loss:.5f} "
          f"at epoch {history.best_epoch}", flush=True)

    bench_traj = {k: embed_dataset(model, v, mode_label=k) for k, v in bench_windows.items()}
    test_traj = {k: embed_dataset(model, v, mode_label=k) for k, v in test_windows.items()}
    frame = joint_frame([t.points for t in bench_traj.values()]
                        + [t.points for t in test_traj.values()])
    kcfg = KdeConfig(grid_size=100)
    benchmarks = [
        (k, block_pool(gkde(apply_frame(bench_traj[k].points, *frame), kcfg), args.pool))
        for k in MODES
    ]
    tests = [
        (k, block_pool(gkde(apply_frame(test_traj[k].points, *frame), kcfg), args.pool))
        for k in MODES
    ]
    print(f"[{time.time()-t_start:6.1f}s] embedded + KDE done "
          f"(grids pooled to {benchmarks[0][1].masses.shape[0]})", flush=True)

    t0 = time.time()
    wd = wd_matrix(
        benchmarks, tests, backend="sinkhorn", epsilon=args.epsilon, tol=args.tol
    )
    print(f"[{time.time()-t_start:6.1f}s] wd_matrix in {time.time()-t0:.1f}s", flush=True)
    labels = list(MODES)
    header = "          " + "  ".join(f"{c:>8s}" for c in labels)
    print(header)
    for i, r in enumerate(labels):
        row = "  ".join(f"{wd.values[i, j]:8.4f}" for j in range(len(labels)))
        print(f"    {r:>5s} {row}")
    correct = 0
    for j, label in enumerate(labels):
        pick = labels[int(np.argmin(wd.values[:, j]))]
        ok = pick == label
        correct += ok
        if not ok:
            print(f"    MISCLASSIFIED {label} -> {pick}")
    diag_ok = all(
        wd.values[i, i] < np.min(np.delete(wd.values[i], i)) for i in range(len(labels))
    )
    print(f"    classification {correct}/6, diagonal strict row-min: {diag_ok}")

    overlaps = []
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            a = np.vstack([bench_traj[labels[i]].points, test_traj[labels[i]].points])
            b = np.vstack([bench_traj[labels[j]].points, test_traj[labels[j]].points])
            area = hull_overlap_area(a, b)
            if area > 0:
                overlaps.append((labels[i], labels[j], round(area, 3)))
    print(f"    hull overlaps: {overlaps if overlaps else 'none'}", flush=True)

    if not args.skip_baselines:
        eval_windows = [w for label in MODES for w in test_windows[label]]
        xs_eval = np.stack([w.data for w in eval_windows])
        xs_train = np.stack([w.data for w in train_set])
        rec = np.stack([model.reconstruct(w.data) for w in eval_windows])
        mse_lstm = float(np.mean((rec - xs_eval) ** 2))

        mlp = MlpVae(
            MlpConfig(n_features=n_features, window=args.window, beta=args.beta),
            np.random.default_rng(args.seed),
        )
        mlp_cfg = TrainConfig(
            batch_size=args.batch_size,
            max_epochs=min(args.max_epochs, 400),
            patience=args.patience,
            learning_rate=args.learning_rate,
            seed=args.seed,
        )
        t0 = time.time()
        _, mlp_history = train(mlp, train_set, mlp_cfg)
        mlp_rec = np.stack([mlp.reconstruct(w.data) for w in eval_windows])
        mse_mlp = float(np.mean((mlp_rec - xs_eval) ** 2))
        print(f"[{time.time()-t_start:6.1f}s] mlp trained in {time.time()-t0:.1f}s", flush=True)

        flat_train = xs_train.reshape(len(xs_train), -1)
        flat_eval = xs_eval.reshape(len(xs_eval), -1)
        pca = pca_fit(flat_train, n_components=2)
        pca_rec = pca_reconstruct(pca, pca_transform(pca, flat_eval))
        mse_pca = float(np.mean((pca_rec - flat_eval) ** 2))
        print(f"    MSE: bilstm {mse_lstm:.5f} | mlp {mse_mlp:.5f} | pca {mse_pca:.5f}  "
              f"(ordering ok: {mse_lstm < mse_mlp < mse_pca})")

    print(f"[{time.time()-t_start:6.1f}s] total", flush=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
