"""Reference methods the recurrent VAE is compared against.

Two baselines: principal component analysis on flattened windows, and a
single-hidden-layer VAE that sees the same flattened windows without any
recurrent structure.  Both use the same hand-written gradient substrate
and the same loss definitions as the main model, so reconstruction errors
are directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn_core as nn
from .vae import LOGVAR_MAX, LOGVAR_MIN, LatentGaussian, reparameterize, vae_loss

__all__ = [
    "PcaModel",
    "pca_fit",
    "pca_transform",
    "pca_reconstruct",
    "save_pca",
    "load_pca",
    "MlpConfig",
    "MlpVae",
]


# ---------------------------------------------------------------------------
# PCA


@dataclass
class PcaModel:
    """Mean vector, top component rows, and their explained variances."""

    mean: np.ndarray
    components: np.ndarray  # (n_components, dim), orthonormal rows
    variances: np.ndarray  # (n_components,), non-increasing

    def __post_init__(self):
        if self.components.ndim != 2 or self.mean.ndim != 1:
            raise ValueError("malformed PCA model")
        if self.components.shape[1] != self.mean.shape[0]:
            raise ValueError("component width must match mean length")


def pca_fit(rows: np.ndarray, n_components: int = 2) -> PcaModel:
    """Top principal components of mean-centered rows via SVD.

    Needs at least three samples.  Each component's sign is fixed so its
    largest-magnitude coordinate is positive, making the fit reproducible.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 3:
        raise ValueError("pca_fit expects a 2-D array with at least 3 rows")
    if n_components < 1 or n_components > min(rows.shape):
        raise ValueError("n_components out of range")
    mean = rows.mean(axis=0)
    centered = rows - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:n_components].copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    variances = s[:n_components] ** 2 / (rows.shape[0] - 1)
    return PcaModel(mean=mean, components=comps, variances=variances)


def pca_transform(model: PcaModel, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    return (rows - model.mean) @ model.components.T


def pca_reconstruct(model: PcaModel, scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    return scores @ model.components + model.mean


def save_pca(model: PcaModel, path) -> None:
    """Three labelled CSV blocks: mean, component rows, variances."""
    def line(v):
        return ",".join(format(x, ".17g") for x in v)

    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("# mean\n")
        fh.write(line(model.mean) + "\n")
        fh.write("# components\n")
        for row in model.components:
            fh.write(line(row) + "\n")
        fh.write("# variances\n")
        fh.write(line(model.variances) + "\n")


def load_pca(path) -> PcaModel:
    blocks: dict[str, list[list[float]]] = {}
    current: str | None = None
    with open(path, "r", encoding="ascii") as fh:
        for raw in fh:
            text = raw.strip()
            if not text:
                continue
            if text.startswith("#"):
                current = text.lstrip("#").strip()
                blocks[current] = []
            elif current is None:
                raise ValueError(f"{path}: data before any block header")
            else:
                blocks[current].append([float(tok) for tok in text.split(",")])
    try:
        return PcaModel(
            mean=np.array(blocks["mean"][0]),
            components=np.array(blocks["components"]),
            variances=np.array(blocks["variances"][0]),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing PCA block {exc}") from exc


# ---------------------------------------------------------------------------
# plain (non-recurrent) VAE


@dataclass(frozen=True)
class MlpConfig:
    """Flat VAE settings: windows are flattened to window * n_features inputs."""

    n_features: int
    window: int
    hidden: int = 256
    latent: int = 2
    beta: float = 1.0
    variance_scaled_noise: bool = False

    def __post_init__(self):
        for name in ("n_features", "window", "hidden"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.latent != 2:
            raise ValueError("latent dimension is fixed at 2")
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ValueError("beta must be finite and non-negative")


class MlpVae:
    """One tanh hidden layer in, one tanh hidden layer out, linear heads.

    Same loss, clamping, and training interface as the recurrent model so
    the trainer and the comparison report treat both uniformly.
    """

    kind = "mlp_vae"

    def __init__(self, cfg: MlpConfig, rng: np.random.Generator | int | None = None):
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        self.cfg = cfg
        D = cfg.window * cfg.n_features
        self.enc_dense = nn.init_dense(rng, cfg.hidden, D)
        self.mu_head = nn.init_dense(rng, cfg.latent, cfg.hidden)
        self.logvar_head = nn.init_dense(rng, cfg.latent, cfg.hidden)
        self.dec_dense = nn.init_dense(rng, cfg.hidden, cfg.latent)
        self.out = nn.init_dense(rng, D, cfg.hidden)

    def param_arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for block in (self.enc_dense, self.mu_head, self.logvar_head, self.dec_dense, self.out):
            out.extend(block.arrays())
        return out

    def _check_input(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 2:
            xs = xs[None]
        if xs.ndim != 3 or xs.shape[1] != self.cfg.window or xs.shape[2] != self.cfg.n_features:
            raise ValueError(
                f"expected windows of shape (batch, {self.cfg.window}, "
                f"{self.cfg.n_features}), got {np.asarray(xs).shape}"
            )
        return xs

    def _encode_cached(self, xs: np.ndarray):
        flat = xs.reshape(xs.shape[0], -1)
        d, cd = nn.dense_forward_cached(flat, self.enc_dense, "tanh")
        mu, cmu = nn.dense_forward_cached(d, self.mu_head, "linear")
        lv_raw, clv = nn.dense_forward_cached(d, self.logvar_head, "linear")
        lv = np.clip(lv_raw, LOGVAR_MIN, LOGVAR_MAX)
        return mu, lv, (cd, cmu, clv, lv_raw)

    def _decode_cached(self, z: np.ndarray):
        d, cd = nn.dense_forward_cached(z, self.dec_dense, "tanh")
        y, cy = nn.dense_forward_cached(d, self.out, "linear")
        B = z.shape[0]
        return y.reshape(B, self.cfg.window, self.cfg.n_features), (cd, cy)

    def encode_batch(self, xs: np.ndarray):
        xs = self._check_input(xs)
        mu, lv, _ = self._encode_cached(xs)
        return mu, lv

    def encode(self, window) -> LatentGaussian:
        data = getattr(window, "data", window)
        mu, lv = self.encode_batch(np.asarray(data, dtype=float)[None])
        return LatentGaussian(mu=mu[0], logvar=lv[0])

    def decode(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        if single:
            z = z[None]
        y, _ = self._decode_cached(z)
        return y[0] if single else y

    def reconstruct(self, xs: np.ndarray) -> np.ndarray:
        xs = self._check_input(xs)
        mu, _ = self.encode_batch(xs)
        return self.decode(mu)

    def losses(self, xs: np.ndarray, zeta: np.ndarray | None = None):
        xs = self._check_input(xs)
        mu, lv, _ = self._encode_cached(xs)
        if zeta is None:
            zeta = np.zeros_like(mu)
        z = reparameterize(mu, lv, zeta, self.cfg.variance_scaled_noise)
        xr, _ = self._decode_cached(z)
        return vae_loss(xs, xr, mu, lv, self.cfg.beta)

    def loss_and_grads(self, xs: np.ndarray, zeta: np.ndarray, grad_scale: float = 1.0):
        xs = self._check_input(xs)
        zeta = np.asarray(zeta, dtype=float)
        if zeta.shape != (xs.shape[0], self.cfg.latent):
            raise ValueError("zeta must have shape (batch, 2)")
        B = xs.shape[0]

        mu, lv, (cd, cmu, clv, lv_raw) = self._encode_cached(xs)
        z = reparameterize(mu, lv, zeta, self.cfg.variance_scaled_noise)
        xr, (cdd, cy) = self._decode_cached(z)

        kl_each = 0.5 * np.sum(np.exp(lv) + mu**2 - 1.0 - lv, axis=1)
        kl = float(np.mean(kl_each))
        mse = float(np.mean((xs - xr) ** 2))
        total = mse + self.cfg.beta * kl

        d_xr = grad_scale * 2.0 * (xr - xs) / xr.size
        d_yflat, g_out = nn.dense_backward(d_xr.reshape(B, -1), cy)
        d_z, g_dd = nn.dense_backward(d_yflat, cdd)

        if self.cfg.variance_scaled_noise:
            d_lv_sample = d_z * zeta * np.exp(lv)
        else:
            d_lv_sample = d_z * zeta * 0.5 * np.exp(0.5 * lv)
        kb = grad_scale * self.cfg.beta / B
        d_mu = d_z + kb * mu
        d_lv = d_lv_sample + kb * 0.5 * (np.exp(lv) - 1.0)

        mask = (lv_raw > LOGVAR_MIN) & (lv_raw < LOGVAR_MAX)
        d_d1, g_mu = nn.dense_backward(d_mu, cmu)
        d_d2, g_lv = nn.dense_backward(d_lv * mask, clv)
        _, g_enc = nn.dense_backward(d_d1 + d_d2, cd)

        grads: list[np.ndarray] = []
        for block in (g_enc, g_mu, g_lv, g_dd, g_out):
            grads.extend(block.arrays())
        return total, mse, kl, grads
