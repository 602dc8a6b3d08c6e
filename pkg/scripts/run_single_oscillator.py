"""Single-oscillator sanity run: the latent trajectory should be a loop.

Simulates one uncoupled limit-cycle node, trains the recurrent VAE on its
windows, and checks that the 2-D latent trajectory closes on itself after
one oscillation period: |z(t) - z(t+T)| below 5% of the trajectory
diameter for at least 90% of comparable windows.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ringmodes.latent import embed_dataset
from ringmodes.svg import svg_scatter
from ringmodes.synth import RingConfig, make_windows, normalize_features, simulate_ring
from ringmodes.train import TrainConfig, train
from ringmodes.vae import ArchConfig, BiLstmVae


def closure_fraction(points: np.ndarray, lag: int, tolerance: float = 0.05):
    """Fraction of points whose lag-shifted partner lies within
    tolerance * diameter; returns (fraction, diameter)."""
    if len(points) <= lag:
        raise ValueError("trajectory shorter than one period")
    diffs = points[None, :, :] - points[:, None, :]
    diameter = float(np.sqrt((diffs**2).sum(-1)).max())
    gaps = np.linalg.norm(points[lag:] - points[:-lag], axis=1)
    return float(np.mean(gaps < tolerance * diameter)), diameter


def run(seed=0, duration=10.0, window=16, stride=4, beta=1e-3,
        max_epochs=250, patience=50, out_dir=None, quiet=False):
    t_start = time.time()
    cfg = RingConfig(
        n_nodes=1,
        natural_freq=2.0,
        duration=duration,
        seed=seed,
        mode_label="single",
    )
    ds = simulate_ring(cfg)
    norm, _ = normalize_features(ds)
    windows = make_windows(norm, window, stride)

    arch = ArchConfig(
        n_features=ds.n_features, window=window,
        hidden1=20, hidden2=12, dense=32, beta=beta,
    )
    model = BiLstmVae(arch, np.random.default_rng(seed))
    tcfg = TrainConfig(
        batch_size=64, max_epochs=max_epochs, patience=patience,
        learning_rate=1e-3, seed=seed,
    )
    _, history = train(model, windows, tcfg)
    train_s = time.time() - t_start
    if not quiet:
        print(f"[{train_s:6.1f}s] trained {len(history.train_loss)} epochs, "
              f"best val {history.best_val_loss:.5f} at epoch {history.best_epoch}")

    traj = embed_dataset(model, windows, mode_label="single")
    # windows advance by `stride` samples, so one period spans this many windows
    period_samples = cfg.sample_rate / cfg.natural_freq[0]
    lag = int(round(period_samples / stride))
    fraction, diameter = closure_fraction(traj.points, lag)
    if not quiet:
        print(f"period lag {lag} windows, trajectory diameter {diameter:.3f}")
        print(f"closure fraction {fraction:.3f} (target >= 0.90 within 5% of diameter)")

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        svg_scatter([("single", traj.points)], out / "latent_loop.svg",
                    title="single-oscillator latent trajectory")
        if not quiet:
            print(f"wrote {out / 'latent_loop.svg'}")
    return fraction, diameter, train_s


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--duration", type=float, default=10.0)
    ap.add_argument("--window", type=int, default=16)
    ap.add_argument("--stride", type=int, default=4)
    ap.add_argument("--beta", type=float, default=1e-3)
    ap.add_argument("--max-epochs", type=int, default=250)
    ap.add_argument("--patience", type=int, default=50)
    ap.add_argument("--out", default=None, help="directory for the trajectory plot")
    args = ap.parse_args(argv)
    fraction, _, _ = run(
        seed=args.seed, duration=args.duration, window=args.window,
        stride=args.stride, beta=args.beta, max_epochs=args.max_epochs,
        patience=args.patience, out_dir=args.out,
    )
    return 0 if fraction >= 0.90 else 1


if __name__ == "__main__":
    raise SystemExit(main())
