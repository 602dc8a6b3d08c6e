"""Command-line pipeline: simulate, train, embed, kde, classify, report.

Every command reads one config file, writes its artifacts into --out, and
drops a <command>.manifest.json recording the tool version plus SHA-256
digests of inputs and outputs.  Runs are deterministic: a repeated command
with the same config and inputs writes byte-identical files.

Exit codes: 0 success, 2 validation/configuration error, 3 numerical
failure (diverging training loss, transport solver non-convergence).
"""

from __future__ import annotations

import argparse
import glob as globmod
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import MlpConfig, MlpVae, pca_fit, pca_reconstruct, pca_transform, save_pca
from .config import ConfigError, PipelineConfig, parse_pipeline_config
from .latent import (
    KdeConfig,
    apply_frame,
    block_pool,
    embed_dataset,
    gkde,
    joint_frame,
    load_trajectory,
    save_grid,
    load_grid,
    save_trajectory,
)
from .svg import svg_heatmap, svg_line, svg_scatter
from .synth import (
    RingConfig,
    apply_normalization,
    load_dataset,
    load_stats,
    make_windows,
    save_dataset,
    save_stats,
    simulate_ring,
    stats_from_values,
)
from .train import (
    CheckpointError,
    NonFiniteLossError,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    save_history,
    train,
)
from .transport import SinkhornNotConverged, classify, save_wd_matrix, wd_matrix
from .vae import ArchConfig, BiLstmVae

__all__ = ["main"]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, config_path, inputs, outputs) -> Path:
    manifest = {
        "tool": "ringmodes",
        "version": __version__,
        "command": command,
        "config": {
            "name": Path(config_path).name,
            "sha256": _sha256(Path(config_path)),
        },
        "inputs": {Path(p).name: _sha256(Path(p)) for p in inputs},
        "outputs": {Path(p).name: _sha256(Path(p)) for p in outputs},
    }
    path = out_dir / f"{command}.manifest.json"
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _expand(patterns) -> list[Path]:
    found: list[Path] = []
    for pat in patterns:
        p = Path(pat)
        if p.is_dir():
            found.extend(sorted(p.glob("*.csv")))
        elif any(ch in pat for ch in "*?["):
            found.extend(Path(m) for m in sorted(globmod.glob(pat)))
        else:
            if not p.exists():
                raise ConfigError(f"input not found: {pat}")
            found.append(p)
    unique = sorted({p.resolve() for p in found})
    if not unique:
        raise ConfigError(f"no files matched: {', '.join(patterns)}")
    return unique


def _split_row(n_samples: int, eval_fraction: float) -> int:
    return int((1.0 - eval_fraction) * n_samples)


def _split_windows(windows, split_row: int, length: int):
    bench = [w for w in windows if w.start_index + length <= split_row]
    test = [w for w in windows if w.start_index >= split_row]
    return bench, test


def _load_normalized(paths, cfg: PipelineConfig):
    """Datasets, pooled leading-rows stats, and per-dataset window splits."""
    datasets = [load_dataset(p) for p in paths]
    width = datasets[0].n_features
    for ds, p in zip(datasets, paths):
        if ds.n_features != width:
            raise ConfigError(f"{p}: feature count {ds.n_features} differs from {width}")
    ef = cfg.windows["eval_fraction"]
    stats = stats_from_values([ds.values[: _split_row(ds.n_samples, ef)] for ds in datasets])
    return datasets, stats


def _windows_for(ds, stats, cfg: PipelineConfig):
    length = cfg.windows["length"]
    norm = apply_normalization(ds, stats)
    windows = make_windows(norm, length, cfg.windows["stride"])
    split = _split_row(ds.n_samples, cfg.windows["eval_fraction"])
    return _split_windows(windows, split, length)


def _build_model(kind: str, n_features: int, cfg: PipelineConfig, seed: int):
    if kind == "bilstm_vae":
        arch = ArchConfig(
            n_features=n_features,
            window=cfg.windows["length"],
            hidden1=cfg.arch["hidden1"],
            hidden2=cfg.arch["hidden2"],
            dense=cfg.arch["dense"],
            beta=cfg.arch["beta"],
            variance_scaled_noise=cfg.arch["variance_scaled_noise"],
            output_gate_uses_prev_cell=cfg.arch["output_gate_uses_prev_cell"],
            ortho_in_loss=cfg.arch["ortho_in_loss"],
        )
        return BiLstmVae(arch, rng=seed)
    mlp = MlpConfig(
        n_features=n_features,
        window=cfg.windows["length"],
        hidden=cfg.mlp["hidden"],
        beta=cfg.mlp["beta"],
        variance_scaled_noise=cfg.arch["variance_scaled_noise"],
    )
    return MlpVae(mlp, rng=seed)


def _reconstruction_mse(model, xs: np.ndarray, batch: int = 256) -> float:
    total = 0.0
    for start in range(0, xs.shape[0], batch):
        xb = xs[start : start + batch]
        rec = model.reconstruct(xb)
        total += float(np.sum((xb - rec) ** 2))
    return total / xs.size


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: PipelineConfig, args) -> int:
    if not cfg.modes:
        raise ConfigError("config declares no [mode.*] sections to simulate")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for i, (label, missing) in enumerate(cfg.modes):
        ring = RingConfig(
            n_nodes=cfg.ring["n_nodes"],
            missing=frozenset(missing),
            coupling_strength=cfg.ring["coupling_strength"],
            natural_freq=cfg.ring["natural_freq"],
            n_sensors_per_node=cfg.ring["n_sensors_per_node"],
            n_vars_per_sensor=cfg.ring["n_vars_per_sensor"],
            sample_rate=cfg.ring["sample_rate"],
            duration=cfg.ring["duration"],
            seed=cfg.seed + i,  # one reproducible stream per declared mode
            mode_label=label,
        )
        ds = simulate_ring(ring)
        path = out / f"{label}.csv"
        save_dataset(ds, path)
        outputs.extend([path, path.with_suffix(".csv.meta.json")])
        print(f"simulated {label}: {ds.n_samples} samples x {ds.n_features} columns -> {path}")
    _write_manifest(out, "simulate", args.config, [], outputs)
    return 0


def cmd_train(cfg: PipelineConfig, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = _expand(args.data)
    datasets, stats = _load_normalized(paths, cfg)

    bench_pool = []
    for ds in datasets:
        bench, _ = _windows_for(ds, stats, cfg)
        bench_pool.extend(bench)
        print(f"{ds.mode_label}: {len(bench)} training windows")
    if not bench_pool:
        raise ConfigError("no training windows; check window length and eval_fraction")

    kind = cfg.train["model"]
    model = _build_model(kind, datasets[0].n_features, cfg, cfg.seed)
    train_cfg = TrainConfig(
        batch_size=cfg.train["batch_size"],
        max_epochs=cfg.train["max_epochs"],
        patience=cfg.train["patience"],
        validation_fraction=cfg.train["validation_fraction"],
        learning_rate=cfg.train["learning_rate"],
        clip_norm=cfg.train["clip_norm"],
        seed=cfg.seed,
    )

    def progress(epoch, train_loss, val_loss, is_best):
        if is_best or epoch % 25 == 0:
            star = " *" if is_best else ""
            print(f"epoch {epoch:4d}  train {train_loss:.6f}  val {val_loss:.6f}{star}")

    model, history = train(model, bench_pool, train_cfg, callback=progress)
    print(
        f"best epoch {history.best_epoch} val {history.best_val_loss:.6f} "
        f"({len(history.val_loss)} epochs, {history.wall_time_s:.1f}s)"
    )

    ckpt = out / f"{kind}.ckpt"
    save_checkpoint(model, ckpt)
    stats_path = out / "norm_stats.csv"
    save_stats(stats, stats_path)
    hist_path = out / f"{kind}_history.csv"
    save_history(history, hist_path)
    curve = out / f"{kind}_loss.svg"
    svg_line(
        [("train", history.train_loss), ("validation", history.val_loss)],
        curve,
        title=f"{kind} training loss",
    )
    _write_manifest(out, "train", args.config, paths, [ckpt, stats_path, hist_path, curve])
    return 0


def cmd_embed(cfg: PipelineConfig, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = load_checkpoint(args.checkpoint)
    stats_path = Path(args.stats) if args.stats else Path(args.checkpoint).parent / "norm_stats.csv"
    stats = load_stats(stats_path)
    paths = _expand(args.data)

    outputs = []
    bench_sets, test_sets = [], []
    for p in paths:
        ds = load_dataset(p)
        bench, test = _windows_for(ds, stats, cfg)
        for role, windows in (("bench", bench), ("test", test)):
            if not windows:
                continue
            traj = embed_dataset(model, windows, mode_label=ds.mode_label)
            path = out / f"traj_{ds.mode_label}_{role}.csv"
            save_trajectory(traj, path)
            outputs.append(path)
            (bench_sets if role == "bench" else test_sets).append(
                (ds.mode_label, traj.points)
            )
        print(f"{ds.mode_label}: embedded {len(bench)} bench + {len(test)} test windows")
    for name, sets in (("bench", bench_sets), ("test", test_sets)):
        if sets:
            path = out / f"latent_{name}.svg"
            svg_scatter(sets, path, title=f"latent means ({name})")
            outputs.append(path)
    _write_manifest(
        out, "embed", args.config, list(paths) + [Path(args.checkpoint), stats_path], outputs
    )
    return 0


def cmd_kde(cfg: PipelineConfig, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = _expand(args.trajectories)
    names, trajs = [], []
    for p in paths:
        stem = p.stem
        names.append(stem[len("traj_"):] if stem.startswith("traj_") else stem)
        trajs.append(load_trajectory(p))

    lo, hi = joint_frame([t.points for t in trajs])
    kde_cfg = KdeConfig(
        grid_size=cfg.kde["grid_size"],
        scalar_bandwidth_kernel=cfg.kde["scalar_bandwidth_kernel"],
    )
    outputs = []
    frame_path = out / "frame.json"
    with open(frame_path, "w", encoding="ascii", newline="\n") as fh:
        json.dump({"lo": list(lo), "hi": list(hi)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(frame_path)
    for name, traj in zip(names, trajs):
        dist = gkde(apply_frame(traj.points, lo, hi), kde_cfg)
        path = out / f"kde_{name}.csv"
        save_grid(dist, path)
        heat = out / f"kde_{name}.svg"
        svg_heatmap(dist.masses, heat, title=f"latent density: {name}")
        outputs.extend([path, heat])
        print(f"{name}: {len(traj)} points -> {path}")
    _write_manifest(out, "kde", args.config, paths, outputs)
    return 0


def _mode_of(stem: str) -> str:
    name = stem[len("kde_"):] if stem.startswith("kde_") else stem
    for suffix in ("_bench", "_test"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


def cmd_classify(cfg: PipelineConfig, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bench_paths = _expand(args.benchmarks)
    test_paths = _expand(args.tests)
    pool = cfg.classify["pool"]
    benchmarks = [(_mode_of(p.stem), block_pool(load_grid(p), pool)) for p in bench_paths]
    tests = [(_mode_of(p.stem), block_pool(load_grid(p), pool)) for p in test_paths]

    backend = cfg.classify["backend"]
    kw = {}
    if backend == "sinkhorn":
        kw = {
            "epsilon": cfg.classify["epsilon"],
            "max_iter": cfg.classify["max_iter"],
            "tol": cfg.classify["tol"],
        }
    matrix = wd_matrix(benchmarks, tests, backend=backend, n_jobs=args.threads, **kw)

    matrix_path = out / "wd_matrix.csv"
    save_wd_matrix(matrix, matrix_path)
    heat = out / "wd_matrix.svg"
    svg_heatmap(
        matrix.values[::-1],  # draw first benchmark row at the top
        heat,
        title=f"Wasserstein distances ({backend})",
        row_labels=list(reversed(matrix.row_labels)),
        col_labels=matrix.col_labels,
    )

    pred_path = out / "predictions.csv"
    correct = 0
    with open(pred_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("test,predicted,match\n")
        for j, test_label in enumerate(matrix.col_labels):
            winner = matrix.row_labels[int(np.argmin(matrix.values[:, j]))]
            match = int(winner == test_label)
            correct += match
            fh.write(f"{test_label},{winner},{match}\n")
            print(f"{test_label}: nearest benchmark {winner}"
                  + ("" if match else "  (differs)"))
    print(f"{correct}/{len(matrix.col_labels)} test sets matched their own benchmark")
    _write_manifest(
        out, "classify", args.config, bench_paths + test_paths,
        [matrix_path, heat, pred_path],
    )
    return 0


def cmd_report(cfg: PipelineConfig, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = _expand(args.data)
    datasets, stats = _load_normalized(paths, cfg)

    model = load_checkpoint(args.checkpoint)
    mlp = load_checkpoint(args.mlp_checkpoint)
    if model.kind != "bilstm_vae" or mlp.kind != "mlp_vae":
        raise ConfigError("report expects --checkpoint recurrent and --mlp-checkpoint flat")

    bench_pool, test_pool = [], []
    for ds in datasets:
        bench, test = _windows_for(ds, stats, cfg)
        bench_pool.extend(bench)
        test_pool.extend(test)
    if not test_pool:
        raise ConfigError("no held-out windows; increase eval_fraction")
    bench_x = np.stack([w.data for w in bench_pool])
    test_x = np.stack([w.data for w in test_pool])

    flat_bench = bench_x.reshape(bench_x.shape[0], -1)
    flat_test = test_x.reshape(test_x.shape[0], -1)
    pca = pca_fit(flat_bench)
    pca_rec = pca_reconstruct(pca, pca_transform(pca, flat_test))
    pca_mse = float(np.mean((flat_test - pca_rec) ** 2))

    rows = [
        ("bilstm_vae", _reconstruction_mse(model, test_x)),
        ("mlp_vae", _reconstruction_mse(mlp, test_x)),
        ("pca", pca_mse),
    ]
    table = out / "mse_report.csv"
    with open(table, "w", encoding="ascii", newline="\n") as fh:
        fh.write("method,test_mse\n")
        for name, mse in rows:
            fh.write(f"{name},{mse:.17g}\n")
            print(f"{name:12s} test mse {mse:.6f}")
    pca_path = out / "pca_model.csv"
    save_pca(pca, pca_path)
    _write_manifest(
        out, "report", args.config, list(paths) + [Path(args.checkpoint), Path(args.mlp_checkpoint)],
        [table, pca_path],
    )
    return 0


# ---------------------------------------------------------------------------
# argument plumbing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringmodes",
        description="oscillator-ring mode recognition pipeline",
    )
    parser.add_argument("--config", help="pipeline config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for distance matrices")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate mode datasets")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common], help="train a model on benchmark windows")
    p.add_argument("--data", nargs="+", required=True, help="dataset CSVs, globs, or a directory")
    p.add_argument("--out", required=True)

    p = sub.add_parser("embed", parents=[common], help="embed windows to latent trajectories")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--stats", default=None, help="normalization stats CSV (default: next to checkpoint)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("kde", parents=[common], help="grid densities from trajectories")
    p.add_argument("--trajectories", nargs="+", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("classify", parents=[common], help="assign test sets to benchmarks")
    p.add_argument("--benchmarks", nargs="+", required=True)
    p.add_argument("--tests", nargs="+", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", parents=[common], help="baseline reconstruction comparison")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mlp-checkpoint", required=True, dest="mlp_checkpoint")
    p.add_argument("--out", required=True)

    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "embed": cmd_embed,
    "kde": cmd_kde,
    "classify": cmd_classify,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if not args.config:
            raise ConfigError("--config is required")
        cfg = parse_pipeline_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return _COMMANDS[args.command](cfg, args)
    except (NonFiniteLossError, SinkhornNotConverged) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
