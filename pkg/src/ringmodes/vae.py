"""Two-layer bidirectional-LSTM variational autoencoder on a 2-D latent plane.

The encoder stacks two bidirectional LSTM layers, takes the final timestep
of the second layer, and maps it through a tanh dense layer to linear mean
and log-variance heads.  The decoder repeats the sampled latent point at
every timestep, mirrors the recurrent stack in reverse width order, and
reconstructs each timestep with a shared dense head.  All gradients are
hand-written; see nn_core.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn_core as nn
from .nn_core import BiLstmParams, DenseParams

__all__ = [
    "ArchConfig",
    "LatentGaussian",
    "OrthoState",
    "BiLstmVae",
    "reparameterize",
    "orthogonalize",
    "vae_loss",
]

LOGVAR_MIN = -20.0
LOGVAR_MAX = 20.0


@dataclass(frozen=True)
class ArchConfig:
    """Shape and loss settings for the recurrent VAE.

    hidden1 is the width of the outer recurrent layer (nearest the data),
    hidden2 the inner one; dense is the shared fully connected width.  The
    latent dimension is fixed at 2 because the downstream density and
    transport analysis works on a plane.

    Flags select printed-form variants of the standard equations:
      variance_scaled_noise      z = mu + exp(logvar) * noise
                                 (default scales by exp(logvar / 2))
      output_gate_uses_prev_cell LSTM output h = o * tanh(c_prev)
                                 (default uses the current cell state)
      ortho_in_loss              reconstruction error measured between
                                 whitened reconstructions and equally
                                 whitened targets (see BiLstmVae.loss_and_grads)
    """

    n_features: int
    window: int
    hidden1: int = 20
    hidden2: int = 12
    dense: int = 32
    latent: int = 2
    beta: float = 1.0
    variance_scaled_noise: bool = False
    output_gate_uses_prev_cell: bool = False
    ortho_in_loss: bool = False

    def __post_init__(self):
        for name in ("n_features", "window", "hidden1", "hidden2", "dense"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.latent != 2:
            raise ValueError("latent dimension is fixed at 2")
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ValueError("beta must be finite and non-negative")


@dataclass
class LatentGaussian:
    """Diagonal Gaussian over the latent plane: mean and log variance, each (2,)."""

    mu: np.ndarray
    logvar: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.logvar = np.asarray(self.logvar, dtype=float)
        if self.mu.shape != (2,) or self.logvar.shape != (2,):
            raise ValueError("latent Gaussian parameters must have shape (2,)")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.logvar))):
            raise ValueError("latent Gaussian parameters must be finite")


def reparameterize(
    mu: np.ndarray,
    logvar: np.ndarray,
    zeta: np.ndarray,
    variance_scaled_noise: bool = False,
) -> np.ndarray:
    """Sample z = mu + scale(logvar) * zeta elementwise.

    The default scale is the standard deviation exp(logvar / 2); with
    ``variance_scaled_noise`` the noise is multiplied by exp(logvar)
    instead.
    """
    scale = np.exp(logvar) if variance_scaled_noise else np.exp(0.5 * logvar)
    return mu + scale * zeta


def vae_loss(
    x: np.ndarray, x_rec: np.ndarray, mu: np.ndarray, logvar: np.ndarray, beta: float = 1.0
) -> tuple[float, float, float]:
    """(total, mse, kl) for a batch of windows.

    mse averages the squared error over every entry of every window; kl is
    the analytic divergence from the unit Gaussian, summed over the two
    latent coordinates and averaged over the batch.  total = mse + beta*kl.
    """
    x = np.asarray(x, dtype=float)
    x_rec = np.asarray(x_rec, dtype=float)
    if x.shape != x_rec.shape:
        raise ValueError("input and reconstruction shapes differ")
    mse = float(np.mean((x - x_rec) ** 2))
    kl_each = 0.5 * np.sum(np.exp(logvar) + mu**2 - 1.0 - logvar, axis=-1)
    kl = float(np.mean(kl_each))
    return mse + beta * kl, mse, kl


@dataclass
class OrthoState:
    """Left factor of the thin SVD used to whiten a batch of row vectors.

    T holds the orthonormal left singular vectors scaled by nothing (batch,
    rank); sigma the kept singular values in non-increasing order.  rank 0
    marks a degenerate (all-zero) batch.
    """

    T: np.ndarray
    sigma: np.ndarray
    rank: int

    @property
    def degenerate(self) -> bool:
        return self.rank == 0


def orthogonalize(batch: np.ndarray) -> tuple[np.ndarray, OrthoState]:
    """Project a batch of flattened outputs onto orthonormal rows.

    With thin SVD batch = T diag(sigma) V^T, the result is the first rank
    rows of V^T, i.e. pinv(T diag(sigma)) @ batch.  Singular directions
    with sigma < 1e-10 * sigma_max are dropped.
    """
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2:
        raise ValueError("orthogonalize expects a 2-D batch")
    U, s, Vt = np.linalg.svd(batch, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        state = OrthoState(T=np.zeros((batch.shape[0], 0)), sigma=np.zeros(0), rank=0)
        return np.zeros((0, batch.shape[1])), state
    keep = s > 1e-10 * s[0]
    r = int(np.sum(keep))
    return Vt[:r].copy(), OrthoState(T=U[:, :r].copy(), sigma=s[:r].copy(), rank=r)


class BiLstmVae:
    """Recurrent VAE over fixed-length windows of multivariate series.

    Parameters live in plain numpy arrays; param_arrays() exposes them in a
    fixed traversal order (encoder outer/inner recurrent layers, encoder
    dense, mean head, log-variance head, decoder inner/outer recurrent
    layers, decoder dense, output head; within a recurrent layer the
    forward direction precedes the reverse, gates ordered f, i, o, c, each
    as input weight, recurrent weight, bias).
    """

    kind = "bilstm_vae"

    def __init__(self, cfg: ArchConfig, rng: np.random.Generator | int | None = None):
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        self.cfg = cfg
        F, H1, H2, D1, L = cfg.n_features, cfg.hidden1, cfg.hidden2, cfg.dense, cfg.latent
        self.enc1 = nn.init_bilstm(rng, H1, F)
        self.enc2 = nn.init_bilstm(rng, H2, 2 * H1)
        self.enc_dense = nn.init_dense(rng, D1, 2 * H2)
        self.mu_head = nn.init_dense(rng, L, D1)
        self.logvar_head = nn.init_dense(rng, L, D1)
        self.dec1 = nn.init_bilstm(rng, H2, L)
        self.dec2 = nn.init_bilstm(rng, H1, 2 * H2)
        self.dec_dense = nn.init_dense(rng, D1, 2 * H1)
        self.out = nn.init_dense(rng, F, D1)

    # -- parameter plumbing -------------------------------------------------

    def _blocks(self):
        return [
            self.enc1, self.enc2, self.enc_dense, self.mu_head, self.logvar_head,
            self.dec1, self.dec2, self.dec_dense, self.out,
        ]

    def param_arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for block in self._blocks():
            out.extend(block.arrays())
        return out

    # -- forward passes -----------------------------------------------------

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
        lagged = self.cfg.output_gate_uses_prev_cell
        h1, c1 = nn.bilstm_forward(xs, self.enc1, lagged)
        h2, c2 = nn.bilstm_forward(h1, self.enc2, lagged)
        last = h2[:, -1, :]
        d, cd = nn.dense_forward_cached(last, self.enc_dense, "tanh")
        mu, cmu = nn.dense_forward_cached(d, self.mu_head, "linear")
        lv_raw, clv = nn.dense_forward_cached(d, self.logvar_head, "linear")
        lv = np.clip(lv_raw, LOGVAR_MIN, LOGVAR_MAX)
        cache = (c1, c2, cd, cmu, clv, lv_raw, h2.shape)
        return mu, lv, cache

    def _encode_backward(self, d_mu, d_lv, cache):
        c1, c2, cd, cmu, clv, lv_raw, h2_shape = cache
        mask = (lv_raw > LOGVAR_MIN) & (lv_raw < LOGVAR_MAX)
        d_d1, g_mu = nn.dense_backward(d_mu, cmu)
        d_d2, g_lv = nn.dense_backward(d_lv * mask, clv)
        d_last, g_d = nn.dense_backward(d_d1 + d_d2, cd)
        d_h2 = np.zeros(h2_shape)
        d_h2[:, -1, :] = d_last
        d_h1, g2 = nn.bilstm_backward(d_h2, c2)
        _, g1 = nn.bilstm_backward(d_h1, c1)
        return [g1, g2, g_d, g_mu, g_lv]

    def _decode_cached(self, z: np.ndarray):
        lagged = self.cfg.output_gate_uses_prev_cell
        B = z.shape[0]
        k, F, D1 = self.cfg.window, self.cfg.n_features, self.cfg.dense
        zs = np.repeat(z[:, None, :], k, axis=1)
        h1, c1 = nn.bilstm_forward(zs, self.dec1, lagged)
        h2, c2 = nn.bilstm_forward(h1, self.dec2, lagged)
        flat = h2.reshape(B * k, -1)
        d, cd = nn.dense_forward_cached(flat, self.dec_dense, "tanh")
        y, cy = nn.dense_forward_cached(d, self.out, "linear")
        return y.reshape(B, k, F), (c1, c2, cd, cy, B, k)

    def _decode_backward(self, d_y, cache):
        c1, c2, cd, cy, B, k = cache
        d_flat, g_out = nn.dense_backward(d_y.reshape(B * k, -1), cy)
        d_h2flat, g_d = nn.dense_backward(d_flat, cd)
        d_h2 = d_h2flat.reshape(B, k, -1)
        d_h1, g2 = nn.bilstm_backward(d_h2, c2)
        d_zs, g1 = nn.bilstm_backward(d_h1, c1)
        d_z = d_zs.sum(axis=1)
        return d_z, [g1, g2, g_d, g_out]

    # -- public API ----------------------------------------------------------

    def encode_batch(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Means and (clamped) log variances for a batch of windows."""
        xs = self._check_input(xs)
        mu, lv, _ = self._encode_cached(xs)
        return mu, lv

    def encode(self, window) -> LatentGaussian:
        """Latent Gaussian for a single window (accepts SequenceWindow or array)."""
        data = getattr(window, "data", window)
        mu, lv = self.encode_batch(np.asarray(data, dtype=float)[None])
        return LatentGaussian(mu=mu[0], logvar=lv[0])

    def decode(self, z: np.ndarray) -> np.ndarray:
        """Reconstruct a window from a latent point (2,) or batch (B, 2)."""
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        if single:
            z = z[None]
        if z.ndim != 2 or z.shape[1] != self.cfg.latent:
            raise ValueError("latent input must have 2 coordinates")
        y, _ = self._decode_cached(z)
        return y[0] if single else y

    def reconstruct(self, xs: np.ndarray) -> np.ndarray:
        """Noise-free roundtrip: encode, take the mean, decode."""
        xs = self._check_input(xs)
        mu, _ = self.encode_batch(xs)
        return self.decode(mu)

    def losses(self, xs: np.ndarray, zeta: np.ndarray | None = None):
        """Forward-only (total, mse, kl); zeta defaults to zeros."""
        xs = self._check_input(xs)
        mu, lv, _ = self._encode_cached(xs)
        if zeta is None:
            zeta = np.zeros_like(mu)
        z = reparameterize(mu, lv, zeta, self.cfg.variance_scaled_noise)
        xr, _ = self._decode_cached(z)
        return vae_loss(xs, xr, mu, lv, self.cfg.beta)

    def loss_and_grads(
        self, xs: np.ndarray, zeta: np.ndarray, grad_scale: float = 1.0
    ) -> tuple[float, float, float, list[np.ndarray]]:
        """Loss terms plus gradients for every parameter array.

        Gradients come back in param_arrays() order, scaled by grad_scale
        (gradient of grad_scale * total).  With ortho_in_loss the squared
        error is measured between the whitened reconstruction batch and the
        identically whitened targets; the whitening operator is treated as
        a constant when differentiating.
        """
        xs = self._check_input(xs)
        zeta = np.asarray(zeta, dtype=float)
        if zeta.shape != (xs.shape[0], self.cfg.latent):
            raise ValueError("zeta must have shape (batch, 2)")
        B, k, F = xs.shape

        mu, lv, enc_cache = self._encode_cached(xs)
        z = reparameterize(mu, lv, zeta, self.cfg.variance_scaled_noise)
        xr, dec_cache = self._decode_cached(z)

        kl_each = 0.5 * np.sum(np.exp(lv) + mu**2 - 1.0 - lv, axis=1)
        kl = float(np.mean(kl_each))

        if self.cfg.ortho_in_loss:
            rec_flat = xr.reshape(B, k * F)
            _, state = orthogonalize(rec_flat)
            if state.degenerate:
                raise ValueError("degenerate reconstruction batch: rank-0 whitening")
            wmap = (state.T / state.sigma).T  # (rank, B): pinv of T diag(sigma)
            rec_w = wmap @ rec_flat
            tgt_w = wmap @ xs.reshape(B, k * F)
            diff = rec_w - tgt_w
            mse = float(np.mean(diff**2))
            d_rec_flat = wmap.T @ (grad_scale * 2.0 * diff / diff.size)
            d_xr = d_rec_flat.reshape(B, k, F)
        else:
            mse = float(np.mean((xs - xr) ** 2))
            d_xr = grad_scale * 2.0 * (xr - xs) / xr.size

        total = mse + self.cfg.beta * kl

        d_z, dec_grads = self._decode_backward(d_xr, dec_cache)
        if self.cfg.variance_scaled_noise:
            d_lv_sample = d_z * zeta * np.exp(lv)
        else:
            d_lv_sample = d_z * zeta * 0.5 * np.exp(0.5 * lv)
        kb = grad_scale * self.cfg.beta / B
        d_mu = d_z + kb * mu
        d_lv = d_lv_sample + kb * 0.5 * (np.exp(lv) - 1.0)
        enc_grads = self._encode_backward(d_mu, d_lv, enc_cache)

        grads: list[np.ndarray] = []
        for block in enc_grads + dec_grads:
            grads.extend(block.arrays())
        return total, mse, kl, grads
