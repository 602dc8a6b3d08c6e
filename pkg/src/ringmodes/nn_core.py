"""Dense, LSTM, and bidirectional-LSTM primitives with hand-written gradients.

Everything runs on float64 numpy arrays with a leading batch axis.  Each
forward function returns its output together with a cache; the matching
backward function consumes that cache, so gradient code never re-derives
intermediate activations.  There is no autograd here: every backward pass
is written out by hand and checked against central finite differences in
the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

__all__ = [
    "DenseParams",
    "LstmCellParams",
    "BiLstmParams",
    "LstmState",
    "AdamConfig",
    "AdamState",
    "init_dense",
    "init_lstm",
    "init_bilstm",
    "dense_forward",
    "dense_forward_cached",
    "dense_backward",
    "lstm_cell_step",
    "lstm_forward",
    "lstm_backward",
    "bilstm_forward",
    "bilstm_backward",
    "bilstm_layer_forward",
    "adam_init",
    "adam_step",
    "global_norm",
    "clip_global_norm",
    "numeric_gradient",
]


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class DenseParams:
    """Affine layer y = x W^T + b.  W has shape (n_out, n_in), b (n_out,)."""

    W: np.ndarray
    b: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.W, self.b]


@dataclass
class LstmCellParams:
    """One LSTM direction.

    w_* map the input (hidden, n_in), u_* map the previous hidden state
    (hidden, hidden), b_* are biases (hidden,).  Gates: f forget, i input,
    o output, c candidate cell.
    """

    w_f: np.ndarray
    u_f: np.ndarray
    b_f: np.ndarray
    w_i: np.ndarray
    u_i: np.ndarray
    b_i: np.ndarray
    w_o: np.ndarray
    u_o: np.ndarray
    b_o: np.ndarray
    w_c: np.ndarray
    u_c: np.ndarray
    b_c: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]

    @property
    def hidden(self) -> int:
        return self.b_f.shape[0]


@dataclass
class BiLstmParams:
    """Forward- and reverse-direction cells of one bidirectional layer."""

    fwd: LstmCellParams
    bwd: LstmCellParams

    def arrays(self) -> list[np.ndarray]:
        return self.fwd.arrays() + self.bwd.arrays()


@dataclass
class LstmState:
    """Hidden and cell state, each (batch, hidden)."""

    h: np.ndarray
    c: np.ndarray


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_dense(rng: np.random.Generator, n_out: int, n_in: int) -> DenseParams:
    """Uniform(-1/sqrt(n_in), 1/sqrt(n_in)) weights, zero bias."""
    return DenseParams(W=_uniform(rng, (n_out, n_in), n_in), b=np.zeros(n_out))


def init_lstm(rng: np.random.Generator, hidden: int, n_in: int) -> LstmCellParams:
    """Per-matrix uniform init scaled by that matrix's own fan-in, zero biases.

    Draw order is fixed (w then u per gate, gates f, i, o, c) so a given
    generator state always produces the same parameters.
    """
    kw = {}
    for gate in "fioc":
        kw[f"w_{gate}"] = _uniform(rng, (hidden, n_in), n_in)
        kw[f"u_{gate}"] = _uniform(rng, (hidden, hidden), hidden)
        kw[f"b_{gate}"] = np.zeros(hidden)
    return LstmCellParams(**kw)


def init_bilstm(rng: np.random.Generator, hidden: int, n_in: int) -> BiLstmParams:
    return BiLstmParams(fwd=init_lstm(rng, hidden, n_in), bwd=init_lstm(rng, hidden, n_in))


# ---------------------------------------------------------------------------
# dense layer


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "linear":
        return z
    if activation == "tanh":
        return np.tanh(z)
    if activation == "sigmoid":
        return sigmoid(z)
    raise ValueError(f"unknown activation {activation!r}")


def dense_forward(x: np.ndarray, p: DenseParams, activation: str = "linear") -> np.ndarray:
    """activation(x W^T + b) for a batch of row vectors."""
    return _activate(x @ p.W.T + p.b, activation)


def dense_forward_cached(x, p: DenseParams, activation: str = "linear"):
    a = dense_forward(x, p, activation)
    return a, (x, a, p, activation)


def dense_backward(d_out: np.ndarray, cache) -> tuple[np.ndarray, DenseParams]:
    """Gradient of a scalar loss through a cached dense layer.

    Returns (d_x, grads) where grads mirrors the DenseParams shapes.
    """
    x, a, p, activation = cache
    if activation == "tanh":
        dz = d_out * (1.0 - a * a)
    elif activation == "sigmoid":
        dz = d_out * a * (1.0 - a)
    else:
        dz = d_out
    grads = DenseParams(W=dz.T @ x, b=dz.sum(axis=0))
    return dz @ p.W, grads


# ---------------------------------------------------------------------------
# LSTM


def _stacked(p: LstmCellParams):
    # One (4H, n_in) and one (4H, H) matrix so each timestep is two GEMMs.
    W = np.concatenate([p.w_f, p.w_i, p.w_o, p.w_c], axis=0)
    U = np.concatenate([p.u_f, p.u_i, p.u_o, p.u_c], axis=0)
    b = np.concatenate([p.b_f, p.b_i, p.b_o, p.b_c])
    return W, U, b


def lstm_cell_step(
    x: np.ndarray,
    prev: LstmState,
    p: LstmCellParams,
    output_gate_uses_prev_cell: bool = False,
) -> LstmState:
    """One LSTM step for a batch of inputs.

    The default output is h = o * tanh(c_t).  With
    ``output_gate_uses_prev_cell`` the output gate instead multiplies
    tanh of the *previous* cell state, h = o * tanh(c_{t-1}); the cell
    update itself is unchanged.
    """
    f = sigmoid(x @ p.w_f.T + prev.h @ p.u_f.T + p.b_f)
    i = sigmoid(x @ p.w_i.T + prev.h @ p.u_i.T + p.b_i)
    o = sigmoid(x @ p.w_o.T + prev.h @ p.u_o.T + p.b_o)
    g = np.tanh(x @ p.w_c.T + prev.h @ p.u_c.T + p.b_c)
    c = f * prev.c + i * g
    h = o * np.tanh(prev.c if output_gate_uses_prev_cell else c)
    return LstmState(h=h, c=c)


def lstm_forward(
    xs: np.ndarray,
    p: LstmCellParams,
    output_gate_uses_prev_cell: bool = False,
):
    """Run one LSTM direction over xs (batch, steps, n_in).

    Returns (hs, cache) with hs of shape (batch, steps, hidden).  Initial
    hidden and cell state are zero.
    """
    B, k, _ = xs.shape
    H = p.hidden
    W, U, b = _stacked(p)
    zx = xs @ W.T + b  # (B, k, 4H), input projections for every step at once

    hs = np.empty((B, k, H))
    F = np.empty((B, k, H))
    I = np.empty((B, k, H))
    O = np.empty((B, k, H))
    G = np.empty((B, k, H))
    C = np.empty((B, k, H))
    TC = np.empty((B, k, H))

    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(k):
        z = zx[:, t, :] + h @ U.T
        f = sigmoid(z[:, :H])
        i = sigmoid(z[:, H : 2 * H])
        o = sigmoid(z[:, 2 * H : 3 * H])
        g = np.tanh(z[:, 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c if output_gate_uses_prev_cell else c_new)
        h = o * tc
        F[:, t], I[:, t], O[:, t], G[:, t] = f, i, o, g
        C[:, t], TC[:, t], hs[:, t] = c_new, tc, h
        c = c_new
    cache = (xs, hs, F, I, O, G, C, TC, p, output_gate_uses_prev_cell)
    return hs, cache


def lstm_backward(d_hs: np.ndarray, cache) -> tuple[np.ndarray, LstmCellParams]:
    """Backpropagation through time for one LSTM direction.

    d_hs holds the loss gradient w.r.t. every step's hidden output.
    Returns (d_xs, grads) with grads mirroring the parameter shapes.
    """
    xs, hs, F, I, O, G, C, TC, p, lagged = cache
    B, k, H = hs.shape
    W, U, _ = _stacked(p)

    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H)
    d_xs = np.empty_like(xs)

    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(k - 1, -1, -1):
        h_prev = hs[:, t - 1] if t > 0 else np.zeros((B, H))
        c_prev = C[:, t - 1] if t > 0 else np.zeros((B, H))
        f, i, o, g, tc = F[:, t], I[:, t], O[:, t], G[:, t], TC[:, t]

        dh = d_hs[:, t] + dh_next
        do = dh * tc
        if lagged:
            # h_t = o_t * tanh(c_{t-1}); the output path feeds c_{t-1} directly
            dc = dc_next.copy()
            dc_prev_direct = dh * o * (1.0 - tc * tc)
        else:
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dc_prev_direct = 0.0
        df = dc * c_prev
        di = dc * g
        dg = dc * i
        dc_prev = dc * f + dc_prev_direct

        dz = np.concatenate(
            [df * f * (1.0 - f), di * i * (1.0 - i), do * o * (1.0 - o), dg * (1.0 - g * g)],
            axis=1,
        )
        dW += dz.T @ xs[:, t]
        dU += dz.T @ h_prev
        db += dz.sum(axis=0)
        d_xs[:, t] = dz @ W
        dh_next = dz @ U
        dc_next = dc_prev

    grads = LstmCellParams(
        w_f=dW[:H], u_f=dU[:H], b_f=db[:H],
        w_i=dW[H : 2 * H], u_i=dU[H : 2 * H], b_i=db[H : 2 * H],
        w_o=dW[2 * H : 3 * H], u_o=dU[2 * H : 3 * H], b_o=db[2 * H : 3 * H],
        w_c=dW[3 * H :], u_c=dU[3 * H :], b_c=db[3 * H :],
    )
    return d_xs, grads


# ---------------------------------------------------------------------------
# bidirectional wrapper


def bilstm_forward(xs: np.ndarray, p: BiLstmParams, output_gate_uses_prev_cell: bool = False):
    """Concatenate a forward and a time-reversed LSTM pass.

    Output shape (batch, steps, 2*hidden): forward features first, then the
    reverse direction re-aligned to the original time order.
    """
    hs_f, cache_f = lstm_forward(xs, p.fwd, output_gate_uses_prev_cell)
    hs_b_rev, cache_b = lstm_forward(xs[:, ::-1], p.bwd, output_gate_uses_prev_cell)
    out = np.concatenate([hs_f, hs_b_rev[:, ::-1]], axis=2)
    return out, (cache_f, cache_b, p.fwd.hidden)


def bilstm_backward(d_out: np.ndarray, cache) -> tuple[np.ndarray, BiLstmParams]:
    cache_f, cache_b, H = cache
    d_xs_f, g_f = lstm_backward(np.ascontiguousarray(d_out[:, :, :H]), cache_f)
    d_xs_b, g_b = lstm_backward(np.ascontiguousarray(d_out[:, ::-1, H:]), cache_b)
    return d_xs_f + d_xs_b[:, ::-1], BiLstmParams(fwd=g_f, bwd=g_b)


def bilstm_layer_forward(seq: np.ndarray, fwd: LstmCellParams, bwd: LstmCellParams) -> np.ndarray:
    """Single-sequence convenience: (steps, n_in) -> (steps, 2*hidden)."""
    out, _ = bilstm_forward(seq[None], BiLstmParams(fwd=fwd, bwd=bwd))
    return out[0]


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    cfg: AdamConfig
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0


def adam_init(params: list[np.ndarray], cfg: AdamConfig | None = None) -> AdamState:
    cfg = cfg or AdamConfig()
    return AdamState(
        cfg=cfg,
        m=[np.zeros_like(a) for a in params],
        v=[np.zeros_like(a) for a in params],
    )


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState
) -> tuple[list[np.ndarray], AdamState]:
    """Bias-corrected Adam update, applied in place.

    Rejects non-finite gradients rather than poisoning the moments.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter, gradient, and state lists must align")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient passed to adam_step")
    c = state.cfg
    state.step += 1
    t = state.step
    bc1 = 1.0 - c.beta1**t
    bc2 = 1.0 - c.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= c.beta1
        m += (1.0 - c.beta1) * g
        v *= c.beta2
        v += (1.0 - c.beta2) * g * g
        p -= c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.eps)
    return params, state


def global_norm(arrays: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(a * a)) for a in arrays)))


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale grads in place so their joint L2 norm is at most max_norm.

    Returns the pre-clip norm.
    """
    norm = global_norm(grads)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


def numeric_gradient(
    f, arrays: list[np.ndarray], step: float = 1e-5
) -> list[np.ndarray]:
    """Central-difference gradient of scalar f() w.r.t. each array, in place.

    f takes no arguments and must read the arrays by reference; entries are
    perturbed one at a time and restored afterwards.
    """
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.ravel()
        gflat = g.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            hi = f()
            flat[idx] = orig - step
            lo = f()
            flat[idx] = orig
            gflat[idx] = (hi - lo) / (2.0 * step)
        out.append(g)
    return out
