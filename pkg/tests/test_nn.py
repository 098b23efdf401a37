"""Numeric kernel tests against hand-computed values and finite differences."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgereid import nn
from edgereid.errors import ConfigError, InputError, ShapeError

# Frozen by hand: 0.5 * (1 + erf(1 / sqrt(2))) is the standard normal CDF at 1,
# the one-sided 68 percent point.
PHI_AT_ONE = 0.8413447460685429


def test_embed_matches_hand_values():
    out = nn.sinusoidal_embed(1.0, 4, max_period=10000.0)
    expected = np.array([math.sin(1.0), math.cos(1.0),
                         math.sin(0.01), math.cos(0.01)])
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)


def test_embed_zero_delta():
    out = nn.sinusoidal_embed(0.0, 6)
    np.testing.assert_array_equal(out[0::2], 0.0)
    np.testing.assert_array_equal(out[1::2], 1.0)


def test_embed_batch_shape_and_sign():
    deltas = np.array([[-3.0, 2.0], [0.5, -7.0]])
    out = nn.sinusoidal_embed(deltas, 8)
    assert out.shape == (2, 2, 8)
    # sin is odd, cos even in the time difference
    flipped = nn.sinusoidal_embed(-deltas, 8)
    np.testing.assert_allclose(out[..., 0::2], -flipped[..., 0::2], atol=1e-15)
    np.testing.assert_allclose(out[..., 1::2], flipped[..., 1::2], atol=1e-15)


def test_embed_pairwise_unit_norm():
    rng = np.random.default_rng(0)
    out = nn.sinusoidal_embed(rng.uniform(-5e4, 5e4, 64), 16)
    sq = out[:, 0::2] ** 2 + out[:, 1::2] ** 2
    np.testing.assert_allclose(sq, 1.0, rtol=0, atol=1e-12)


def test_embed_periodicity_dim4():
    # divisors are 1 and 100, so 20000*pi advances both angles by whole turns
    period = 20000.0 * math.pi
    for t in (0.0, 1.0, -13.0, 977.25):
        a = nn.sinusoidal_embed(t, 4)
        b = nn.sinusoidal_embed(t + period, 4)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_embed_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        nn.sinusoidal_embed(1.0, 5)
    with pytest.raises(ConfigError):
        nn.sinusoidal_embed(1.0, 0)
    with pytest.raises(ConfigError):
        nn.sinusoidal_embed(1.0, 4, max_period=1.0)
    with pytest.raises(InputError):
        nn.sinusoidal_embed(float("nan"), 4)


def test_gelu_hand_values():
    assert nn.gelu(np.array([0.0]))[0] == 0.0
    np.testing.assert_allclose(nn.gelu(np.array([1.0]))[0], PHI_AT_ONE,
                               rtol=0, atol=1e-12)
    # odd-part identity: gelu(x) + gelu(-x) = x * erf(x / sqrt 2)
    x = np.linspace(-3, 3, 41)
    lhs = nn.gelu(x) + nn.gelu(-x)
    rhs = x * (2.0 * 0.5 * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2))) - 1.0)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_gelu_gradient_matches_finite_difference():
    x = np.linspace(-2.5, 2.5, 21)
    h = 1e-6
    numeric = (nn.gelu(x + h) - nn.gelu(x - h)) / (2 * h)
    analytic = nn.gelu_backward(np.ones_like(x), x)
    np.testing.assert_allclose(analytic, numeric, atol=1e-9)


def test_relu_and_backward():
    x = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_array_equal(nn.relu(x), [0.0, 0.0, 2.0])
    np.testing.assert_array_equal(nn.relu_backward(np.ones(3), x), [0.0, 0.0, 1.0])


def test_softmax_hand_value():
    out = nn.softmax(np.array([math.log(2.0), 0.0]))
    np.testing.assert_allclose(out, [2.0 / 3.0, 1.0 / 3.0], rtol=0, atol=1e-15)


@settings(deadline=None, max_examples=50)
@given(st.lists(st.floats(min_value=-1e4, max_value=1e4), min_size=1, max_size=8))
def test_softmax_sums_to_one_at_large_magnitudes(values):
    out = nn.softmax(np.array(values))
    assert abs(out.sum() - 1.0) <= 1e-9
    assert np.all(out >= 0.0)


def test_cross_entropy_uniform_logits_is_log_c():
    logits = np.zeros((2, 3))
    loss, grad = nn.cross_entropy(logits, np.array([0, 2]))
    assert abs(loss - math.log(3.0)) < 1e-12
    expected = np.full((2, 3), 1.0 / 3.0)
    expected[0, 0] -= 1.0
    expected[1, 2] -= 1.0
    np.testing.assert_allclose(grad, expected / 2.0, atol=1e-15)


def test_cross_entropy_rejects_bad_targets():
    with pytest.raises(InputError):
        nn.cross_entropy(np.zeros((2, 3)), np.array([0, 3]))
    with pytest.raises(ShapeError):
        nn.cross_entropy(np.zeros((2, 3)), np.array([0]))


def test_cross_entropy_gradient_matches_finite_difference():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(4, 5))
    targets = np.array([0, 3, 1, 4])
    _, grad = nn.cross_entropy(logits, targets)
    h = 1e-6
    for i in range(4):
        for j in range(5):
            up = logits.copy()
            up[i, j] += h
            down = logits.copy()
            down[i, j] -= h
            numeric = (nn.cross_entropy(up, targets)[0]
                       - nn.cross_entropy(down, targets)[0]) / (2 * h)
            assert abs(grad[i, j] - numeric) < 1e-8


def test_layer_norm_rows_are_standardised():
    rng = np.random.default_rng(2)
    x = rng.normal(loc=3.0, scale=2.0, size=(5, 7))
    scale = nn.Param(np.ones(7))
    shift = nn.Param(np.zeros(7))
    y, _ = nn.layer_norm_forward(x, scale, shift)
    np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-12)
    # eps shrinks the variance slightly below 1
    np.testing.assert_allclose(y.var(axis=-1), 1.0, atol=1e-4)


def test_layer_norm_gradients_by_finite_difference():
    rng = np.random.default_rng(3)
    x = nn.Param(rng.normal(size=(3, 4)))
    scale = nn.Param(rng.uniform(0.5, 1.5, 4))
    shift = nn.Param(rng.normal(size=4))
    mix = rng.normal(size=(3, 4))

    def loss_fn():
        y, _ = nn.layer_norm_forward(x.value, scale, shift)
        return float((y * mix).sum())

    y, cache = nn.layer_norm_forward(x.value, scale, shift)
    nn.zero_grads([x, scale, shift])
    x.grad += nn.layer_norm_backward(mix, cache, scale, shift)
    report = nn.gradient_check(loss_fn, {"x": x, "scale": scale, "shift": shift},
                               tolerance=1e-6)
    assert report.passed, report.errors


def test_linear_gradients_by_finite_difference():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 4))
    weight = nn.Param(rng.normal(size=(4, 2)))
    bias = nn.Param(rng.normal(size=2))

    def loss_fn():
        y = nn.linear_forward(x, weight, bias)
        return float(0.5 * (y ** 2).sum())

    y = nn.linear_forward(x, weight, bias)
    nn.zero_grads([weight, bias])
    nn.linear_backward(y, x, weight, bias)
    report = nn.gradient_check(loss_fn, {"w": weight, "b": bias}, tolerance=1e-6)
    assert report.passed, report.errors


def test_linear_shape_error():
    with pytest.raises(ShapeError):
        nn.linear_forward(np.zeros((2, 3)), nn.Param(np.zeros((4, 2))))


def test_batch_norm_train_standardises_and_tracks():
    rng = np.random.default_rng(5)
    bn = nn.BatchNorm(3)
    x = rng.normal(loc=2.0, scale=3.0, size=(16, 3))
    y, _ = bn.forward(x, train=True)
    np.testing.assert_allclose(y.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=0), 1.0, atol=1e-4)
    mean = x.mean(axis=0)
    var = x.var(axis=0) * 16 / 15
    np.testing.assert_allclose(bn.running_mean, 0.1 * mean, atol=1e-12)
    np.testing.assert_allclose(bn.running_var, 0.9 + 0.1 * var, atol=1e-12)


def test_batch_norm_eval_uses_running_stats():
    bn = nn.BatchNorm(2)
    bn.running_mean = np.array([1.0, -1.0])
    bn.running_var = np.array([4.0, 0.25])
    x = np.array([[3.0, 0.0]])
    y, _ = bn.forward(x, train=False)
    expected = (x - bn.running_mean) / np.sqrt(bn.running_var + bn.eps)
    np.testing.assert_allclose(y, expected, atol=1e-12)


def test_batch_norm_needs_two_rows_in_train_mode():
    bn = nn.BatchNorm(2)
    with pytest.raises(ConfigError):
        bn.forward(np.zeros((1, 2)), train=True)


def test_batch_norm_gradients_by_finite_difference():
    rng = np.random.default_rng(6)
    bn = nn.BatchNorm(3)
    x = rng.normal(size=(8, 3))
    mix = rng.normal(size=(8, 3))

    def loss_fn():
        y, _ = bn.forward(x, train=True)
        return float((y * mix).sum())

    _, cache = bn.forward(x, train=True)
    nn.zero_grads(bn.params())
    bn.backward(mix, cache)
    report = nn.gradient_check(loss_fn, {"scale": bn.scale, "shift": bn.shift},
                               tolerance=1e-6)
    assert report.passed, report.errors


def test_batch_norm_state_roundtrip():
    bn = nn.BatchNorm(2)
    bn.forward(np.random.default_rng(7).normal(size=(4, 2)), train=True)
    other = nn.BatchNorm(2)
    other.load_state(bn.state())
    np.testing.assert_array_equal(other.running_mean, bn.running_mean)
    np.testing.assert_array_equal(other.running_var, bn.running_var)
    with pytest.raises(ShapeError):
        nn.BatchNorm(3).load_state(bn.state())


def test_adam_first_step_moves_by_lr():
    p = nn.Param(np.array([1.0]))
    p.grad[:] = 0.5
    nn.adam_step([p], lr=0.01)
    # bias correction makes the first update lr * g / (|g| + eps)
    np.testing.assert_allclose(p.value, [0.99], atol=1e-8)
    assert p.step_count == 1


def test_adam_zero_gradient_is_a_no_op_on_values():
    p = nn.Param(np.array([2.0, -3.0]))
    nn.adam_step([p], lr=0.1)
    np.testing.assert_array_equal(p.value, [2.0, -3.0])
    assert p.step_count == 1
    with pytest.raises(ConfigError):
        nn.adam_step([p], lr=0.0)


def test_param_copies_and_zero_grads():
    source = np.array([1.0, 2.0])
    p = nn.Param(source)
    source[0] = 99.0
    assert p.value[0] == 1.0
    p.grad[:] = 5.0
    nn.zero_grads([p])
    np.testing.assert_array_equal(p.grad, [0.0, 0.0])


def test_gradient_check_flags_a_corrupted_gradient():
    rng = np.random.default_rng(8)
    w = nn.Param(rng.normal(size=(3,)))
    x = rng.normal(size=3)

    def loss_fn():
        return float(0.5 * ((w.value * x) ** 2).sum())

    nn.zero_grads([w])
    w.grad += (w.value * x) * x
    clean = nn.gradient_check(loss_fn, {"w": w})
    assert clean.passed and clean.max_error < 1e-7

    w.grad[1] += 0.7
    dirty = nn.gradient_check(loss_fn, {"w": w})
    assert not dirty.passed
    assert dirty.worst()[0] == "w"


def test_gradient_check_rejects_bad_step():
    with pytest.raises(ConfigError):
        nn.gradient_check(lambda: 0.0, {}, step=0.0)


@settings(deadline=None, max_examples=30)
@given(st.floats(min_value=-100.0, max_value=100.0))
def test_embed_values_stay_bounded(delta):
    out = nn.sinusoidal_embed(delta, 8)
    assert np.all(np.abs(out) <= 1.0 + 1e-15)
