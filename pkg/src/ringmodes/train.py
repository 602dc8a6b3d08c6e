"""Minibatch trainer with early stopping, plus binary checkpoints.

The trainer works against the shared model interface (param_arrays,
loss_and_grads, losses) so the recurrent VAE and the flat baseline VAE
train identically: Adam with global-norm clipping, fresh latent noise per
sample per pass, a seeded shuffle split for validation, and the best
validation snapshot restored at the end.
"""

from __future__ import annotations

import struct
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import nn_core as nn
from .baselines import MlpConfig, MlpVae
from .vae import ArchConfig, BiLstmVae

__all__ = [
    "TrainConfig",
    "TrainHistory",
    "NonFiniteLossError",
    "CheckpointError",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "save_history",
    "load_history",
]

CHECKPOINT_MAGIC = b"BLVW"
CHECKPOINT_VERSION = 1
_KIND_CODES = {"bilstm_vae": 1, "mlp_vae": 2}


class NonFiniteLossError(RuntimeError):
    """Raised when a training loss stops being finite.

    Carries enough context to locate the blow-up: epoch, batch index
    within the epoch, and the offending loss value.
    """

    def __init__(self, epoch: int, batch: int, value: float):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(
            f"non-finite training loss {value!r} at epoch {epoch}, batch {batch}; "
            "aborting before the optimizer state is poisoned"
        )


class CheckpointError(RuntimeError):
    """Unreadable, corrupt, or architecturally incompatible checkpoint."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 2000
    patience: int = 100
    validation_fraction: float = 0.2
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs, and patience must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie strictly between 0 and 1")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate and clip_norm must be positive")


@dataclass
class TrainHistory:
    """Per-epoch losses and the index of the best validation epoch (0-based).

    wall_time_s is informational only: it is excluded from equality and
    never serialized, so identical runs compare (and rerun) identically.
    """

    train_loss: list[float]
    val_loss: list[float]
    best_epoch: int
    wall_time_s: float = field(default=0.0, compare=False)

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch]


def _window_array(windows) -> np.ndarray:
    if isinstance(windows, np.ndarray):
        xs = windows
    else:
        xs = np.stack([np.asarray(getattr(w, "data", w), dtype=float) for w in windows])
    if xs.ndim != 3:
        raise ValueError("training data must stack to (n_windows, window, n_features)")
    return np.asarray(xs, dtype=float)


def _mean_loss(model, xs: np.ndarray, batch_size: int) -> float:
    # Deterministic validation pass: latent noise fixed at zero.
    total = 0.0
    for start in range(0, xs.shape[0], batch_size):
        xb = xs[start : start + batch_size]
        t, _, _ = model.losses(xb, np.zeros((xb.shape[0], 2)))
        total += t * xb.shape[0]
    return total / xs.shape[0]


def train(model, windows, cfg: TrainConfig | None = None, callback=None):
    """Fit the model in place; returns (model, TrainHistory).

    Early stopping counts consecutive epochs without a new best validation
    loss and gives up once the count reaches cfg.patience.  Whatever
    happens, the parameters of the best validation epoch are restored into
    the model before returning.  callback, if given, is invoked as
    callback(epoch, train_loss, val_loss, is_best) after every epoch.
    """
    cfg = cfg or TrainConfig()
    xs = _window_array(windows)
    n = xs.shape[0]
    n_val = max(1, int(round(cfg.validation_fraction * n)))
    if n - n_val < 1:
        raise ValueError(f"{n} windows leave no training data after the validation split")

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    train_x = xs[perm[n_val:]]
    val_x = xs[perm[:n_val]]

    params = model.param_arrays()
    adam = nn.adam_init(
        params,
        nn.AdamConfig(
            learning_rate=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps
        ),
    )

    t0 = time.perf_counter()
    history_train: list[float] = []
    history_val: list[float] = []
    best_val = np.inf
    best_epoch = -1
    best_params = [p.copy() for p in params]
    stale = 0

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(train_x.shape[0])
        running = 0.0
        for bi, start in enumerate(range(0, order.size, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            xb = train_x[idx]
            zeta = rng.standard_normal((xb.shape[0], 2))
            total, _, _, grads = model.loss_and_grads(xb, zeta)
            if not np.isfinite(total):
                raise NonFiniteLossError(epoch, bi, total)
            nn.clip_global_norm(grads, cfg.clip_norm)
            nn.adam_step(params, grads, adam)
            running += total * xb.shape[0]
        train_loss = running / order.size
        val_loss = _mean_loss(model, val_x, cfg.batch_size)
        if not np.isfinite(val_loss):
            raise NonFiniteLossError(epoch, -1, val_loss)
        history_train.append(train_loss)
        history_val.append(val_loss)

        is_best = val_loss < best_val
        if is_best:
            best_val = val_loss
            best_epoch = epoch
            for snap, p in zip(best_params, params):
                np.copyto(snap, p)
            stale = 0
        else:
            stale += 1
        if callback is not None:
            callback(epoch, train_loss, val_loss, is_best)
        if stale >= cfg.patience:
            break

    for p, snap in zip(params, best_params):
        np.copyto(p, snap)
    history = TrainHistory(
        train_loss=history_train,
        val_loss=history_val,
        best_epoch=best_epoch,
        wall_time_s=time.perf_counter() - t0,
    )
    return model, history


def save_history(history: TrainHistory, path) -> None:
    """epoch,train_loss,val_loss,is_best rows; is_best marks new-best epochs."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("epoch,train_loss,val_loss,is_best\n")
        best = np.inf
        for e, (tr, va) in enumerate(zip(history.train_loss, history.val_loss)):
            flag = 1 if va < best else 0
            best = min(best, va)
            fh.write(f"{e},{tr:.17g},{va:.17g},{flag}\n")


def load_history(path) -> TrainHistory:
    train_loss: list[float] = []
    val_loss: list[float] = []
    best_epoch = -1
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "epoch,train_loss,val_loss,is_best":
            raise ValueError(f"{path}: unexpected history header {header!r}")
        for line in fh:
            e, tr, va, flag = line.strip().split(",")
            train_loss.append(float(tr))
            val_loss.append(float(va))
            if flag == "1":
                best_epoch = int(e)
    return TrainHistory(train_loss=train_loss, val_loss=val_loss, best_epoch=best_epoch)


# ---------------------------------------------------------------------------
# checkpoints
#
# Layout (all little-endian):
#   magic "BLVW"
#   payload:
#     u32 format version
#     u8  model kind (1 recurrent VAE, 2 flat VAE)
#     config fields for that kind (u32 sizes, f64 beta, u8 flag bits)
#     u32 tensor count
#     per tensor: u32 rank, u32 dims..., f64 values in row-major order,
#       in param_arrays() traversal order
#   u32 CRC32 of the payload


def _pack_config(model) -> bytes:
    cfg = model.cfg
    if model.kind == "bilstm_vae":
        flags = (
            (1 if cfg.variance_scaled_noise else 0)
            | (2 if cfg.output_gate_uses_prev_cell else 0)
            | (4 if cfg.ortho_in_loss else 0)
        )
        return struct.pack(
            "<6Id B",
            cfg.n_features, cfg.window, cfg.hidden1, cfg.hidden2, cfg.dense, cfg.latent,
            cfg.beta, flags,
        )
    if model.kind == "mlp_vae":
        flags = 1 if cfg.variance_scaled_noise else 0
        return struct.pack(
            "<4Id B", cfg.n_features, cfg.window, cfg.hidden, cfg.latent, cfg.beta, flags
        )
    raise CheckpointError(f"unknown model kind {model.kind!r}")


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.off = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.off + size > len(self.buf):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(fmt, self.buf, self.off)
        self.off += size
        return vals

    def take_floats(self, count: int) -> np.ndarray:
        size = 8 * count
        if self.off + size > len(self.buf):
            raise CheckpointError("truncated checkpoint")
        arr = np.frombuffer(self.buf, dtype="<f8", count=count, offset=self.off).copy()
        self.off += size
        return arr


def save_checkpoint(model, path) -> None:
    """Write the model (config plus every parameter tensor) to one file."""
    parts = [struct.pack("<I", CHECKPOINT_VERSION), struct.pack("<B", _KIND_CODES[model.kind])]
    parts.append(_pack_config(model))
    arrays = model.param_arrays()
    parts.append(struct.pack("<I", len(arrays)))
    for a in arrays:
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    payload = b"".join(parts)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + payload + struct.pack("<I", crc))


def load_checkpoint(path, expect_config=None):
    """Rebuild a model from a checkpoint file.

    Verifies magic, version, CRC, and tensor shapes; with expect_config the
    stored architecture must equal the expected one.  Returns the model.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 8:
        raise CheckpointError(f"{path}: too short to be a checkpoint")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes, not a checkpoint file")
    payload, (stored_crc,) = blob[4:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError(f"{path}: CRC mismatch, file is corrupt")

    r = _Reader(payload)
    (version,) = r.take("<I")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (kind_code,) = r.take("<B")
    if kind_code == _KIND_CODES["bilstm_vae"]:
        nf, win, h1, h2, dense, latent = r.take("<6I")
        (beta,) = r.take("<d")
        (flags,) = r.take("<B")
        cfg = ArchConfig(
            n_features=nf, window=win, hidden1=h1, hidden2=h2, dense=dense, latent=latent,
            beta=beta,
            variance_scaled_noise=bool(flags & 1),
            output_gate_uses_prev_cell=bool(flags & 2),
            ortho_in_loss=bool(flags & 4),
        )
        model = BiLstmVae(cfg, rng=0)
    elif kind_code == _KIND_CODES["mlp_vae"]:
        nf, win, hidden, latent = r.take("<4I")
        (beta,) = r.take("<d")
        (flags,) = r.take("<B")
        cfg = MlpConfig(
            n_features=nf, window=win, hidden=hidden, latent=latent,
            beta=beta, variance_scaled_noise=bool(flags & 1),
        )
        model = MlpVae(cfg, rng=0)
    else:
        raise CheckpointError(f"{path}: unknown model kind code {kind_code}")

    if expect_config is not None and cfg != expect_config:
        raise CheckpointError(
            f"{path}: architecture mismatch: checkpoint holds {cfg}, expected {expect_config}"
        )

    arrays = model.param_arrays()
    (n_tensors,) = r.take("<I")
    if n_tensors != len(arrays):
        raise CheckpointError(
            f"{path}: tensor count {n_tensors} does not match architecture "
            f"({len(arrays)} expected)"
        )
    for a in arrays:
        (rank,) = r.take("<I")
        dims = r.take(f"<{rank}I") if rank else ()
        if tuple(dims) != a.shape:
            raise CheckpointError(f"{path}: tensor shape {dims} does not match {a.shape}")
        np.copyto(a, r.take_floats(a.size).reshape(a.shape))
    if r.off != len(payload):
        raise CheckpointError(f"{path}: trailing bytes after final tensor")
    return model
