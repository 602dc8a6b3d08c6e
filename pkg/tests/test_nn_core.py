import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringmodes.nn_core import (
    AdamConfig,
    adam_init,
    adam_step,
    bilstm_forward,
    bilstm_backward,
    clip_global_norm,
    dense_backward,
    dense_forward,
    dense_forward_cached,
    global_norm,
    init_bilstm,
    init_dense,
    init_lstm,
    lstm_backward,
    lstm_forward,
    numeric_gradient,
    sigmoid,
)


def _rel_err(analytic, numeric):
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return np.abs(analytic - numeric).max() / scale


def test_sigmoid_range_and_symmetry():
    x = np.linspace(-50, 50, 101)
    s = sigmoid(x)
    # saturates to exactly 0.0/1.0 in float64 beyond |x| ~ 37
    assert np.all(s >= 0) and np.all(s <= 1)
    mid = np.abs(x) < 30
    assert np.all(s[mid] > 0) and np.all(s[mid] < 1)
    assert np.allclose(s + sigmoid(-x), 1.0, atol=1e-12)


def test_dense_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    p = init_dense(rng, 5, 7)
    x = rng.normal(size=(4, 7))
    d_out = rng.normal(size=(4, 5))

    y, cache = dense_forward_cached(x, p, activation="tanh")
    dx, grads = dense_backward(d_out, cache)

    def loss():
        out = dense_forward(x, p, activation="tanh")
        return float((out * d_out).sum())

    num = numeric_gradient(loss, [p.W, p.b])
    assert _rel_err(grads.W, num[0]) < 1e-6
    assert _rel_err(grads.b, num[1]) < 1e-6

    num_x = numeric_gradient(loss, [x])
    assert _rel_err(dx, num_x[0]) < 1e-6


@pytest.mark.parametrize("lagged", [False, True])
def test_lstm_gradients_match_finite_differences(lagged):
    rng = np.random.default_rng(1)
    p = init_lstm(rng, hidden=4, n_in=3)
    xs = rng.normal(size=(2, 5, 3))
    d_hs = rng.normal(size=(2, 5, 4))

    hs, cache = lstm_forward(xs, p, output_gate_uses_prev_cell=lagged)
    d_xs, grads = lstm_backward(d_hs, cache)

    def loss():
        out, _ = lstm_forward(xs, p, output_gate_uses_prev_cell=lagged)
        return float((out * d_hs).sum())

    num = numeric_gradient(loss, p.arrays())
    for g, n in zip(grads.arrays(), num):
        assert _rel_err(g, n) < 1e-5

    num_x = numeric_gradient(loss, [xs])
    assert _rel_err(d_xs, num_x[0]) < 1e-5


def test_bilstm_concatenates_directions():
    rng = np.random.default_rng(2)
    p = init_bilstm(rng, hidden=3, n_in=2)
    xs = rng.normal(size=(1, 4, 2))
    hs, cache = bilstm_forward(xs, p)
    assert hs.shape == (1, 4, 6)

    fwd, _ = lstm_forward(xs, p.fwd)
    bwd, _ = lstm_forward(np.ascontiguousarray(xs[:, ::-1]), p.bwd)
    assert np.allclose(hs[..., :3], fwd)
    assert np.allclose(hs[..., 3:], bwd[:, ::-1])


def test_bilstm_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    p = init_bilstm(rng, hidden=3, n_in=2)
    xs = rng.normal(size=(2, 4, 2))
    d_hs = rng.normal(size=(2, 4, 6))

    hs, cache = bilstm_forward(xs, p)
    d_xs, grads = bilstm_backward(d_hs, cache)

    def loss():
        out, _ = bilstm_forward(xs, p)
        return float((out * d_hs).sum())

    num_x = numeric_gradient(loss, [xs])
    assert _rel_err(d_xs, num_x[0]) < 1e-5


def test_init_bounds_follow_fan_in():
    rng = np.random.default_rng(4)
    p = init_dense(rng, 64, 25)
    assert np.abs(p.W).max() <= 1.0 / 5.0 + 1e-12
    assert np.all(p.b == 0)
    lstm = init_lstm(rng, hidden=16, n_in=9)
    assert np.abs(lstm.w_f).max() <= 1.0 / 3.0 + 1e-12
    assert np.abs(lstm.u_f).max() <= 1.0 / 4.0 + 1e-12


def test_adam_first_step_closed_form():
    lr = 1e-3
    params = [np.array([1.0, -2.0])]
    grads = [np.array([0.5, -0.25])]
    state = adam_init(params, AdamConfig(learning_rate=lr))
    before = params[0].copy()
    adam_step(params, grads, state)
    # bias-corrected first step is lr * g / (|g| + eps), i.e. nearly lr * sign(g)
    expected = before - lr * np.sign(grads[0])
    assert np.allclose(params[0], expected, atol=1e-8)


def test_adam_constant_gradient_update_magnitude_converges_to_lr():
    lr = 2e-3
    params = [np.zeros(3)]
    grads = [np.full(3, 0.7)]
    state = adam_init(params, AdamConfig(learning_rate=lr))
    step = None
    for _ in range(1000):
        prev = params[0].copy()
        adam_step(params, grads, state)
        step = np.abs(params[0] - prev)
    assert np.all(np.abs(step - lr) / lr < 0.01)


def test_adam_zero_gradient_is_a_no_op():
    params = [np.array([3.0, -1.0])]
    state = adam_init(params, AdamConfig())
    for _ in range(5):
        adam_step(params, [np.zeros(2)], state)
    assert np.allclose(params[0], [3.0, -1.0])


def test_adam_rejects_non_finite_gradients():
    params = [np.zeros(2)]
    state = adam_init(params, AdamConfig())
    with pytest.raises(ValueError):
        adam_step(params, [np.array([np.nan, 0.0])], state)
    with pytest.raises(ValueError):
        adam_step(params, [np.array([np.inf, 0.0])], state)


def test_global_norm_matches_flat_vector_norm():
    rng = np.random.default_rng(5)
    arrays = [rng.normal(size=s) for s in [(3, 4), (7,), (2, 2, 2)]]
    flat = np.concatenate([a.ravel() for a in arrays])
    assert global_norm(arrays) == pytest.approx(np.linalg.norm(flat))


def test_clip_global_norm_scales_down_only():
    rng = np.random.default_rng(6)
    grads = [rng.normal(size=(4, 4)) * 10, rng.normal(size=(3,)) * 10]
    pre = global_norm(grads)
    reported = clip_global_norm(grads, 5.0)
    assert reported == pytest.approx(pre)
    assert global_norm(grads) == pytest.approx(5.0)

    small = [np.array([0.1, 0.2])]
    pre_small = global_norm(small)
    clip_global_norm(small, 5.0)
    assert global_norm(small) == pytest.approx(pre_small)


def test_numeric_gradient_quadratic_is_exact():
    a = np.array([1.0, 2.0, -3.0])

    def f():
        return float((a**2).sum())

    (g,) = numeric_gradient(f, [a])
    assert np.allclose(g, 2 * a, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_lstm_forward_is_deterministic(seed):
    rng = np.random.default_rng(seed)
    p = init_lstm(rng, hidden=3, n_in=2)
    xs = rng.normal(size=(1, 3, 2))
    h1, _ = lstm_forward(xs, p)
    h2, _ = lstm_forward(xs, p)
    assert np.array_equal(h1, h2)
    assert np.all(np.isfinite(h1))
    # tanh output times sigmoid gate stays inside (-1, 1)
    assert np.abs(h1).max() < 1.0
