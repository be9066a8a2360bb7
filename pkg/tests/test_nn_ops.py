import math

import numpy as np
import pytest

from amrnet.data import ClassWeights
from amrnet.errors import InputError, StructuralError
from amrnet.nn import ops
from gradcheck import CHECKS
from oracles import naive_conv1d


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("layer", sorted(CHECKS))
def test_gradient_matches_finite_differences(layer, seed):
    assert CHECKS[layer](seed) <= 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_fused_gradients_on_both_backends(backend, seed):
    assert CHECKS["embed_conv"](seed) <= 1e-4


# --------------------------------------------------------------------------
# convolution


@pytest.mark.parametrize("k", [1, 3, 5, 7])
def test_conv1d_matches_loop_oracle(k):
    rng = np.random.default_rng(k)
    x = rng.standard_normal((2, 9, 3))
    kern = rng.standard_normal((k, 3, 4))
    bias = rng.standard_normal(4)
    np.testing.assert_allclose(ops.conv1d_forward(x, kern, bias), naive_conv1d(x, kern, bias),
                               rtol=1e-12, atol=1e-12)


def test_conv1d_kernel_longer_than_sequence():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 2, 2))
    kern = rng.standard_normal((7, 2, 3))
    bias = np.zeros(3)
    np.testing.assert_allclose(ops.conv1d_forward(x, kern, bias), naive_conv1d(x, kern, bias), atol=1e-12)


def test_conv1d_rejects_even_kernel():
    with pytest.raises(StructuralError):
        ops.conv1d_forward(np.zeros((1, 4, 2)), np.zeros((4, 2, 1)), np.zeros(1))


def test_fused_equals_embedding_then_conv(backend):
    rng = np.random.default_rng(1)
    tokens = rng.integers(0, 5, (3, 17))
    table = rng.standard_normal((5, 6))
    kern = rng.standard_normal((5, 6, 4))
    bias = rng.standard_normal(4)
    ref = naive_conv1d(ops.embedding_forward(tokens, table), kern, bias)
    np.testing.assert_allclose(ops.embed_conv_forward(tokens, table, kern, bias), ref, rtol=1e-11, atol=1e-11)


def test_embedding_rejects_out_of_range_token():
    with pytest.raises(InputError):
        ops.embedding_forward(np.array([[0, 5]]), np.zeros((5, 2)))


def test_embedding_gradient_counts_tokens():
    tokens = np.array([[0, 0, 3, 4, 4, 4]])
    grad = ops.embedding_backward(tokens, np.ones((1, 6, 2)))
    np.testing.assert_array_equal(grad[:, 0], [2, 0, 0, 1, 3])


# --------------------------------------------------------------------------
# batch normalization


def test_batchnorm_training_output_is_standardized():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 10, 3)) * 5 + 2
    out, _ = ops.batchnorm_forward(x, np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), True)
    np.testing.assert_allclose(out.mean(axis=(0, 1)), 0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=(0, 1)), 1, rtol=1e-5)


def test_batchnorm_running_stats_update():
    x = np.array([[[1.0], [3.0]]])
    rm, rv = np.array([10.0]), np.array([4.0])
    ops.batchnorm_forward(x, np.ones(1), np.zeros(1), rm, rv, True, momentum=0.9)
    np.testing.assert_allclose(rm, [0.9 * 10 + 0.1 * 2])
    np.testing.assert_allclose(rv, [0.9 * 4 + 0.1 * 1])


def test_batchnorm_inference_uses_running_stats():
    x = np.full((2, 3, 1), 5.0)
    out, cache = ops.batchnorm_forward(x, np.array([2.0]), np.array([1.0]), np.array([3.0]), np.array([4.0]), False)
    assert cache is None
    np.testing.assert_allclose(out, 2.0 * (5 - 3) / math.sqrt(4 + 1e-5) + 1)


def test_batchnorm_constant_channel_is_finite():
    x = np.full((3, 4, 2), 7.0)
    out, cache = ops.batchnorm_forward(x, np.ones(2), np.zeros(2), np.zeros(2), np.ones(2), True)
    assert np.all(out == 0)
    dx, _, _ = ops.batchnorm_backward(np.ones_like(x), cache)
    assert np.all(np.isfinite(dx))


# --------------------------------------------------------------------------
# pooling, activations, dropout


@pytest.mark.parametrize("L,expected", [(8, 4), (9, 4), (2, 1), (60936, 30468)])
def test_maxpool_output_length(L, expected):
    out, _ = ops.maxpool1d_forward(np.zeros((1, L, 1)), 2, need_cache=False)
    assert out.shape == (1, expected, 1)


def test_maxpool_pool_longer_than_sequence():
    with pytest.raises(StructuralError):
        ops.maxpool1d_forward(np.zeros((1, 1, 1)), 2)


def test_maxpool_tie_routes_gradient_to_first():
    x = np.array([[[1.0], [1.0], [0.0], [2.0], [5.0]]])
    out, cache = ops.maxpool1d_forward(x, 2)
    np.testing.assert_array_equal(out[0, :, 0], [1, 2])
    dx = ops.maxpool1d_backward(np.ones((1, 2, 1)), cache)
    np.testing.assert_array_equal(dx[0, :, 0], [1, 0, 0, 1, 0])


def test_global_maxpool_picks_first_maximum():
    x = np.array([[[3.0, 0.0], [3.0, 1.0]]])
    out, cache = ops.global_maxpool_forward(x)
    np.testing.assert_array_equal(out, [[3.0, 1.0]])
    np.testing.assert_array_equal(ops.global_maxpool_backward(np.ones((1, 2)), cache)[0], [[1, 0], [0, 1]])


def test_relu_gradient_zero_at_zero():
    out, mask = ops.relu_forward(np.array([-1.0, 0.0, 2.0]))
    np.testing.assert_array_equal(out, [0, 0, 2])
    np.testing.assert_array_equal(ops.relu_backward(np.ones(3), mask), [0, 0, 1])


def test_dense_rejects_width_mismatch():
    with pytest.raises(StructuralError):
        ops.dense_forward(np.zeros((2, 3)), np.zeros((4, 1)), np.zeros(1))


def test_dropout_is_identity_in_inference():
    x = np.arange(6.0)
    out, mask = ops.dropout_forward(x, 0.5, False, np.random.default_rng(0))
    assert out is x and mask is None


def test_dropout_preserves_expectation():
    x = np.ones(200_000)
    out, _ = ops.dropout_forward(x, 0.3, True, np.random.default_rng(0))
    assert abs(out.mean() - 1) < 0.01
    assert set(np.unique(out)) == {0.0, 1 / 0.7}


def test_sigmoid_saturates_without_overflow():
    with np.errstate(over="raise", invalid="raise"):
        p = ops.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    np.testing.assert_array_equal(p, [0.0, 0.5, 1.0])


# --------------------------------------------------------------------------
# loss


def test_bce_at_one_half_is_log_two():
    loss, _ = ops.weighted_bce(np.full(4, 0.5), np.array([0, 1, 0, 1]))
    assert loss == pytest.approx(math.log(2), rel=1e-15)


def test_bce_analytic_value():
    p, y = np.array([0.9, 0.2]), np.array([1, 0])
    loss, grad = ops.weighted_bce(p, y)
    assert loss == pytest.approx(-(math.log(0.9) + math.log(0.8)) / 2, rel=1e-14)
    np.testing.assert_allclose(grad, [-1 / 0.9 / 2, 1 / 0.8 / 2])


def test_bce_class_weights_scale_terms():
    w = ClassWeights(0.5, 3.0)
    p, y = np.array([0.7, 0.4]), np.array([1, 0])
    loss, _ = ops.weighted_bce(p, y, w)
    assert loss == pytest.approx(-(3.0 * math.log(0.7) + 0.5 * math.log(0.6)) / 2, rel=1e-14)


def test_bce_clamps_saturated_probabilities():
    loss, grad = ops.weighted_bce(np.array([0.0, 1.0]), np.array([1, 0]))
    assert np.isfinite(loss) and loss == pytest.approx(-math.log(1e-7), rel=1e-6)
    np.testing.assert_array_equal(grad, [0, 0])


def test_bce_shape_mismatch():
    with pytest.raises(InputError):
        ops.weighted_bce(np.zeros(3), np.zeros(2))
