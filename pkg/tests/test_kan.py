import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mogkan.errors import MogkanError
from mogkan.kan import (
    KanLayer,
    adam_init,
    adam_step,
    batch_norm_forward,
    batch_norm_init,
    dropout,
    kan_layer_backward,
    kan_layer_edges,
    kan_layer_forward,
    kan_layer_init,
    softmax_cross_entropy,
)
from mogkan.spline import evaluate_univariate, make_grid

GRID = make_grid(-3, 3, 5, 3)


def test_init_deterministic_and_shaped():
    a = kan_layer_init(3, 2, GRID, seed=11)
    b = kan_layer_init(3, 2, GRID, seed=11)
    for k in a.params():
        assert np.array_equal(a.params()[k], b.params()[k])
    assert a.coeffs.shape == (2, 3, GRID.num_basis)
    assert a.base_weights.shape == (2, 3)
    np.testing.assert_array_equal(a.spline_weights, 1.0)


def test_init_seeds_differ():
    a = kan_layer_init(3, 2, GRID, seed=1)
    b = kan_layer_init(3, 2, GRID, seed=2)
    x = np.random.default_rng(0).normal(size=(4, 3))
    assert not np.allclose(kan_layer_forward(a, x), kan_layer_forward(b, x))


def test_init_scale():
    layer = kan_layer_init(400, 50, GRID, seed=0)
    assert layer.base_weights.std() == pytest.approx(1 / math.sqrt(400), rel=0.05)
    assert layer.coeffs.std() == pytest.approx(0.1 / math.sqrt(400), rel=0.05)


def test_bad_shapes_rejected():
    with pytest.raises(MogkanError):
        KanLayer(2, 2, GRID, np.zeros((2, 3)), np.zeros((2, 2)), np.zeros((2, 2, GRID.num_basis)))
    layer = kan_layer_init(3, 2, GRID, seed=0)
    with pytest.raises(MogkanError) as exc:
        kan_layer_forward(layer, np.zeros((4, 2)))
    assert exc.value.kind == "shape-mismatch"


def test_zero_layer_outputs_zero():
    layer = KanLayer(3, 2, GRID, np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 3, GRID.num_basis)))
    x = np.random.default_rng(0).normal(size=(5, 3)) * 4
    np.testing.assert_array_equal(kan_layer_forward(layer, x), 0.0)


def test_rows_independent():
    layer = kan_layer_init(3, 4, GRID, seed=3)
    row = np.array([[0.3, -1.2, 2.5]])
    out = kan_layer_forward(layer, np.vstack([row, row]))
    np.testing.assert_array_equal(out[0], out[1])
    np.testing.assert_array_equal(out[:1], kan_layer_forward(layer, row))


def test_single_edge_reduces_to_univariate():
    rng = np.random.default_rng(5)
    c = rng.normal(size=(1, 1, GRID.num_basis))
    layer = KanLayer(1, 1, GRID, np.array([[0.7]]), np.array([[1.3]]), c)
    out = kan_layer_forward(layer, np.array([[0.5]]))[0, 0]
    assert out == pytest.approx(evaluate_univariate(GRID, 0.7, 1.3, c[0, 0], 0.5), rel=1e-14)


def test_layer_backward_finite_difference():
    rng = np.random.default_rng(7)
    layer = kan_layer_init(3, 2, GRID, seed=2)
    layer.spline_weights += rng.normal(size=layer.spline_weights.shape)
    x = rng.normal(size=(6, 3)) * 1.5
    w = rng.normal(size=(6, 2))

    def f():
        return float((kan_layer_forward(layer, x) * w).sum())

    _, cache = kan_layer_edges(layer, x)
    grads, dx = kan_layer_backward(layer, cache, w)
    h = 1e-6
    for name, p in layer.params().items():
        for idx in list(np.ndindex(p.shape))[::5]:
            old = p[idx]
            p[idx] = old + h
            up = f()
            p[idx] = old - h
            down = f()
            p[idx] = old
            assert grads[name][idx] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-8)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        assert dx[idx] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-8)


def test_batch_norm_unit_affine_centres():
    x = np.random.default_rng(0).normal(3, 2, size=(16, 4))
    out, _ = batch_norm_forward(batch_norm_init(4), x, "train")
    assert np.abs(out.mean(axis=0)).max() <= 1e-10


def test_batch_norm_scaled_shifted_four_rows():
    x = np.array([[1.0, 10.0], [2.0, 10.5], [3.0, 9.0], [4.0, 12.0]])
    bn = batch_norm_init(2)
    bn.gamma[:] = 2.0
    bn.beta[:] = 1.0
    out, _ = batch_norm_forward(bn, x, "train")
    b = len(x)
    pop_var = x.var(axis=0)
    # normalization uses the population variance; the sample variance of the output is therefore
    # 4 * B / (B - 1), shrunk slightly by epsilon
    expected = 4.0 * pop_var / (pop_var + bn.epsilon) * b / (b - 1)
    np.testing.assert_allclose(out.mean(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=0, ddof=1), expected, rtol=1e-12)


def test_batch_norm_running_stats_update():
    x = np.random.default_rng(1).normal(2, 3, size=(10, 3))
    bn = batch_norm_init(3, momentum=0.1)
    batch_norm_forward(bn, x, "train")
    np.testing.assert_allclose(bn.running_mean, 0.1 * x.mean(axis=0))
    np.testing.assert_allclose(bn.running_var, 0.9 + 0.1 * x.var(axis=0, ddof=1))


def test_batch_norm_eval_is_pure():
    bn = batch_norm_init(3)
    batch_norm_forward(bn, np.random.default_rng(2).normal(size=(8, 3)), "train")
    before = (bn.running_mean.copy(), bn.running_var.copy())
    x = np.random.default_rng(3).normal(size=(5, 3))
    a, _ = batch_norm_forward(bn, x, "eval")
    b, _ = batch_norm_forward(bn, x, "eval")
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(bn.running_mean, before[0])
    np.testing.assert_array_equal(bn.running_var, before[1])


def test_batch_norm_small_batch():
    with pytest.raises(MogkanError) as exc:
        batch_norm_forward(batch_norm_init(2), np.ones((1, 2)), "train")
    assert exc.value.kind == "batch-too-small"


def test_dropout_rate_zero_and_eval_identity():
    x = np.random.default_rng(0).normal(size=(7, 5))
    np.testing.assert_array_equal(dropout(x, 0.0, 1, "train"), x)
    np.testing.assert_array_equal(dropout(x, 0.0, 1, "eval"), x)
    np.testing.assert_array_equal(dropout(x, 0.5, 1, "eval"), x)


def test_dropout_keep_fraction_and_scaling():
    x = np.ones(100_000)
    out = dropout(x, 0.5, 123, "train")
    kept = out != 0
    assert abs(kept.mean() - 0.5) <= 0.01
    np.testing.assert_array_equal(out[kept], 2.0)


def test_dropout_deterministic():
    x = np.ones((20, 20))
    np.testing.assert_array_equal(dropout(x, 0.3, 9), dropout(x, 0.3, 9))
    assert not np.array_equal(dropout(x, 0.3, 9), dropout(x, 0.3, 10))


def test_dropout_invalid_rate():
    with pytest.raises(MogkanError) as exc:
        dropout(np.ones(3), 1.0, 0)
    assert exc.value.kind == "invalid-rate"


def test_cross_entropy_uniform():
    loss, probs, _ = softmax_cross_entropy(np.zeros((3, 4)), np.array([0, 1, 3]))
    assert loss == pytest.approx(math.log(4), abs=1e-15)
    np.testing.assert_allclose(probs, 0.25)


def test_cross_entropy_extreme_logits():
    loss, probs, _ = softmax_cross_entropy(np.array([[1e4, 0.0]]), np.array([0]))
    assert loss == pytest.approx(0.0, abs=1e-300)
    assert np.isfinite(probs).all()
    loss, _, _ = softmax_cross_entropy(np.array([[-1e4, 1e4]]), np.array([0]))
    assert loss == pytest.approx(2e4)


def test_cross_entropy_hand_value():
    loss, _, _ = softmax_cross_entropy(np.array([[1.0, 2.0, 3.0]]), np.array([2]))
    expected = -math.log(math.exp(3) / (math.exp(1) + math.exp(2) + math.exp(3)))
    assert loss == pytest.approx(expected, rel=1e-14)
    assert loss == pytest.approx(0.40761, abs=1e-5)


def test_cross_entropy_label_range():
    with pytest.raises(MogkanError) as exc:
        softmax_cross_entropy(np.zeros((2, 3)), np.array([0, 3]))
    assert exc.value.kind == "label-out-of-range"


@given(arrays(np.float64, (4, 5), elements=st.floats(-1e4, 1e4)))
def test_softmax_rows_are_distributions(logits):
    _, probs, _ = softmax_cross_entropy(logits, np.zeros(4, dtype=int))
    assert (probs >= 0).all()
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_cross_entropy_gradient():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(5, 3))
    y = rng.integers(0, 3, 5)
    _, _, dz = softmax_cross_entropy(z, y)
    h = 1e-6
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        fd = (softmax_cross_entropy(zp, y)[0] - softmax_cross_entropy(zm, y)[0]) / (2 * h)
        assert dz[idx] == pytest.approx(fd, abs=1e-9)


def test_adam_zero_gradient_no_change():
    p = {"w": np.array([1.0, -2.0, 3.0])}
    state = adam_init(p)
    adam_step(p, {"w": np.zeros(3)}, state, 0.1, 0.0)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0, 3.0])
    assert state.step_count == 1


def test_adam_first_step_magnitude():
    p = {"w": np.zeros(3)}
    g = np.array([0.5, -3.0, 1e-3])
    state = adam_init(p)
    adam_step(p, {"w": g}, state, 0.01, 0.0)
    np.testing.assert_allclose(p["w"], -0.01 * g / (np.abs(g) + state.epsilon), rtol=1e-12)


def test_adam_decoupled_decay():
    p = {"w": np.array([2.0, -4.0])}
    state = adam_init(p)
    adam_step(p, {"w": np.zeros(2)}, state, 0.01, 0.1)
    np.testing.assert_allclose(p["w"], np.array([2.0, -4.0]) * (1 - 0.001), rtol=1e-15)


def test_adam_shape_mismatch():
    p = {"w": np.zeros(3)}
    with pytest.raises(MogkanError) as exc:
        adam_step(p, {"w": np.zeros(2)}, adam_init(p), 0.1)
    assert exc.value.kind == "shape-mismatch"


def test_two_layer_kan_fits_product():
    """Width 2d+1 = 5 hidden functions fit x1 * x2 on [-1, 1]^2."""
    rng = np.random.default_rng(0)
    l1 = kan_layer_init(2, 5, GRID, seed=0)
    l2 = kan_layer_init(5, 1, GRID, seed=1)
    X = rng.uniform(-1, 1, (256, 2))
    y = X[:, 0] * X[:, 1]
    params = {**{f"a.{k}": v for k, v in l1.params().items()}, **{f"b.{k}": v for k, v in l2.params().items()}}
    state = adam_init(params)
    for _ in range(2000):
        e1, c1 = kan_layer_edges(l1, X)
        e2, c2 = kan_layer_edges(l2, e1.sum(axis=2))
        r = e2.sum(axis=2)[:, 0] - y
        g2, dh = kan_layer_backward(l2, c2, (2 * r / len(y))[:, None])
        g1, _ = kan_layer_backward(l1, c1, dh)
        adam_step(params, {**{f"a.{k}": v for k, v in g1.items()}, **{f"b.{k}": v for k, v in g2.items()}},
                  state, 0.01)
    Xt = rng.uniform(-1, 1, (1000, 2))
    pred = kan_layer_forward(l2, kan_layer_forward(l1, Xt))[:, 0]
    assert np.mean((pred - Xt[:, 0] * Xt[:, 1]) ** 2) <= 1e-3
