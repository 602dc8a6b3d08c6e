import numpy as np
import pytest

from oracles import kl_standard_normal
from ringmodes.nn_core import AdamConfig, adam_init, adam_step, numeric_gradient
from ringmodes.vae import (
    ArchConfig,
    BiLstmVae,
    LOGVAR_MAX,
    LOGVAR_MIN,
    orthogonalize,
    reparameterize,
    vae_loss,
)

TINY = dict(n_features=2, window=3, hidden1=3, hidden2=2, dense=4)


def _tiny_model(beta=1.0, **flags):
    cfg = ArchConfig(beta=beta, **TINY, **flags)
    return BiLstmVae(cfg, np.random.default_rng(0))


def test_kl_unit_example():
    mu = np.array([[1.0, 0.0]])
    lv = np.zeros((1, 2))
    x = np.zeros((1, 3, 2))
    total, mse, kl = vae_loss(x, x, mu, lv, beta=1.0)
    assert kl == 0.5
    assert mse == 0.0
    assert total == 0.5


def test_vae_loss_matches_oracle_and_composition():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 3, 2))
    xr = rng.normal(size=(4, 3, 2))
    mu = rng.normal(size=(4, 2))
    lv = rng.normal(size=(4, 2))
    beta = 0.37
    total, mse, kl = vae_loss(x, xr, mu, lv, beta)
    assert mse == pytest.approx(np.mean((x - xr) ** 2))
    oracle_kl = np.mean([kl_standard_normal(m, l) for m, l in zip(mu, lv)])
    assert kl == pytest.approx(oracle_kl)
    assert total == pytest.approx(mse + beta * kl)


def test_reparameterize_forms():
    mu = np.array([[0.5, -1.0]])
    lv = np.array([[0.8, -0.4]])
    zeta = np.array([[1.3, -0.7]])
    assert np.allclose(reparameterize(mu, lv, np.zeros_like(mu)), mu)
    std = reparameterize(mu, lv, zeta)
    assert np.allclose(std, mu + np.exp(0.5 * lv) * zeta)
    var = reparameterize(mu, lv, zeta, variance_scaled_noise=True)
    assert np.allclose(var, mu + np.exp(lv) * zeta)


def test_orthogonalize_rows_are_orthonormal():
    rng = np.random.default_rng(2)
    batch = rng.normal(size=(5, 11))
    rows, state = orthogonalize(batch)
    assert state.rank == 5
    assert np.allclose(rows @ rows.T, np.eye(5), atol=1e-10)
    # T diag(sigma) rows reproduces the batch
    assert np.allclose(state.T @ np.diag(state.sigma) @ rows, batch, atol=1e-10)


def test_orthogonalize_drops_dependent_rows():
    rng = np.random.default_rng(3)
    row = rng.normal(size=(1, 7))
    batch = np.vstack([row, 2.0 * row, -0.5 * row])
    rows, state = orthogonalize(batch)
    assert state.rank == 1
    assert rows.shape == (1, 7)


def test_orthogonalize_zero_batch_is_degenerate():
    rows, state = orthogonalize(np.zeros((3, 4)))
    assert state.degenerate
    assert rows.shape == (0, 4)


def test_encode_decode_shapes():
    model = _tiny_model()
    rng = np.random.default_rng(4)
    xs = rng.normal(size=(5, 3, 2))
    mu, lv = model.encode_batch(xs)
    assert mu.shape == (5, 2) and lv.shape == (5, 2)
    assert np.all(lv >= LOGVAR_MIN) and np.all(lv <= LOGVAR_MAX)
    g = model.encode(xs[0])
    assert g.mu.shape == (2,) and g.logvar.shape == (2,)
    assert np.allclose(g.mu, mu[0])
    out = model.decode(np.array([0.1, -0.2]))
    assert out.shape == (3, 2)
    rec = model.reconstruct(xs)
    assert rec.shape == xs.shape


@pytest.mark.parametrize(
    "flags",
    [
        {},
        {"variance_scaled_noise": True},
        {"output_gate_uses_prev_cell": True},
    ],
)
def test_loss_gradients_match_finite_differences(flags):
    model = _tiny_model(beta=0.5, **flags)
    rng = np.random.default_rng(5)
    xs = rng.normal(size=(3, 3, 2))
    zeta = rng.normal(size=(3, 2))

    total, mse, kl, grads = model.loss_and_grads(xs, zeta)
    assert total == pytest.approx(mse + 0.5 * kl)

    params = model.param_arrays()

    def loss():
        t, _, _, _ = model.loss_and_grads(xs, zeta)
        return t

    num = numeric_gradient(loss, params)
    for g, n in zip(grads, num):
        # the 1e-6 floor keeps finite-difference noise on vanishing
        # gradients (early-step output gates) from reading as mismatch
        scale = max(np.abs(g).max(), np.abs(n).max(), 1e-6)
        assert np.abs(g - n).max() / scale < 1e-4


def test_whitened_loss_gradients_treat_operator_as_constant():
    """With the whitened objective the map is stop-gradient, so the analytic
    gradients must match finite differences of a loss whose whitening map is
    frozen at the base point (not of the raw objective)."""
    model = _tiny_model(beta=0.5, ortho_in_loss=True)
    rng = np.random.default_rng(5)
    xs = rng.normal(size=(3, 3, 2))
    zeta = rng.normal(size=(3, 2))
    B = xs.shape[0]

    _, _, _, grads = model.loss_and_grads(xs, zeta)

    def forward_parts():
        mu, lv = model.encode_batch(xs)
        z = reparameterize(mu, lv, zeta, model.cfg.variance_scaled_noise)
        xr = np.stack([model.decode(zz) for zz in z])
        return mu, lv, xr

    _, _, xr0 = forward_parts()
    _, state = orthogonalize(xr0.reshape(B, -1))
    wmap = (state.T / state.sigma).T

    def frozen_loss():
        mu, lv, xr = forward_parts()
        diff = wmap @ xr.reshape(B, -1) - wmap @ xs.reshape(B, -1)
        mse = float(np.mean(diff**2))
        kl = float(np.mean(0.5 * np.sum(np.exp(lv) + mu**2 - 1.0 - lv, axis=1)))
        return mse + 0.5 * kl

    # the whitened objective is large (1/sigma factors), so a wider step
    # keeps the central-difference stencil out of float roundoff
    num = numeric_gradient(frozen_loss, model.param_arrays(), step=1e-3)
    for g, n in zip(grads, num):
        scale = max(np.abs(g).max(), np.abs(n).max(), 1e-6)
        assert np.abs(g - n).max() / scale < 1e-4


def test_gradients_scale_linearly():
    model = _tiny_model()
    rng = np.random.default_rng(6)
    xs = rng.normal(size=(2, 3, 2))
    zeta = rng.normal(size=(2, 2))
    _, _, _, g1 = model.loss_and_grads(xs, zeta, grad_scale=1.0)
    _, _, _, g3 = model.loss_and_grads(xs, zeta, grad_scale=3.0)
    for a, b in zip(g1, g3):
        assert np.allclose(3.0 * a, b, rtol=1e-12, atol=1e-14)


def test_short_training_reduces_loss():
    model = _tiny_model(beta=0.01)
    rng = np.random.default_rng(7)
    xs = rng.normal(size=(8, 3, 2)) * 0.5
    params = model.param_arrays()
    state = adam_init(params, AdamConfig(learning_rate=5e-3))
    zeta = np.zeros((8, 2))
    first, *_ = model.loss_and_grads(xs, zeta)
    for _ in range(50):
        _, _, _, grads = model.loss_and_grads(xs, zeta)
        adam_step(params, grads, state)
    last, *_ = model.loss_and_grads(xs, zeta)
    assert last < first


def test_deterministic_given_seed():
    a = BiLstmVae(ArchConfig(**TINY), np.random.default_rng(42))
    b = BiLstmVae(ArchConfig(**TINY), np.random.default_rng(42))
    for x, y in zip(a.param_arrays(), b.param_arrays()):
        assert np.array_equal(x, y)


def test_arch_config_validation():
    with pytest.raises(ValueError):
        ArchConfig(n_features=0, window=3)
    with pytest.raises(ValueError):
        ArchConfig(n_features=2, window=0)
    with pytest.raises(ValueError):
        ArchConfig(n_features=2, window=3, beta=-1.0)


def test_input_shape_validation():
    model = _tiny_model()
    with pytest.raises(ValueError):
        model.encode_batch(np.zeros((2, 4, 2)))  # wrong window
    with pytest.raises(ValueError):
        model.loss_and_grads(np.zeros((2, 3, 2)), np.zeros((3, 2)))  # zeta batch
