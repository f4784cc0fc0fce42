"""Tests for layer kernels, losses and the gradient suite."""

import math

import numpy as np
import pytest

from statenet.errors import ConfigurationError, DataError, DimensionError
from statenet.layers import (
    DropoutMask,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    dropout_apply,
    dropout_backward,
    global_avg_pool,
    global_avg_pool_backward,
    l2_penalty,
    maxpool2x2,
    maxpool2x2_backward,
    relu,
    relu_backward,
    softmax,
    softmax_cross_entropy,
)
from statenet.layers.gradcheck import check_gradient, relative_error

TOL_64 = 1e-6


def _distinct(rng, shape):
    """Random float64 values with no near-ties and no values close to zero."""
    values = rng.permutation(np.arange(1, int(np.prod(shape)) + 1, dtype=np.float64))
    signs = rng.choice([-1.0, 1.0], size=values.shape)
    return (values * signs * 0.1).reshape(shape)


class TestConvForward:
    def test_shape_preserved_3x3(self, rng):
        x = rng.standard_normal((1, 3, 32, 32)).astype(np.float32)
        k = rng.standard_normal((8, 3, 3, 3)).astype(np.float32)
        assert conv2d_forward(x, k, np.zeros(8, np.float32)).shape == (1, 8, 32, 32)

    @pytest.mark.slow
    def test_full_size_first_layer(self, rng):
        x = rng.standard_normal((1, 3, 224, 224)).astype(np.float32)
        k = rng.standard_normal((64, 3, 3, 3)).astype(np.float32)
        assert conv2d_forward(x, k, np.zeros(64, np.float32)).shape == (1, 64, 224, 224)

    @pytest.mark.parametrize("k", [1, 3])
    @pytest.mark.parametrize("hw", [(1, 1), (2, 5), (7, 3)])
    def test_spatial_extent_preserved(self, rng, k, hw):
        x = rng.standard_normal((2, 2, *hw))
        kernels = rng.standard_normal((3, 2, k, k))
        assert conv2d_forward(x, kernels, np.zeros(3)).shape == (2, 3, *hw)

    def test_delta_kernel_is_identity(self, rng):
        x = rng.standard_normal((2, 3, 5, 5))
        kernels = np.zeros((3, 3, 3, 3))
        for c in range(3):
            kernels[c, c, 1, 1] = 1.0
        np.testing.assert_array_equal(conv2d_forward(x, kernels, np.zeros(3)), x)

    def test_all_ones_kernel_counts_padded_taps(self):
        v = 2.0
        x = np.full((1, 1, 4, 4), v)
        out = conv2d_forward(x, np.ones((1, 1, 3, 3)), np.zeros(1))[0, 0]
        assert out[1, 1] == 9 * v
        assert out[0, 0] == out[3, 3] == 4 * v
        assert out[0, 1] == out[2, 3] == 6 * v

    def test_direct_matches_im2col(self, rng):
        x = rng.standard_normal((2, 4, 6, 6))
        kernels = rng.standard_normal((5, 4, 3, 3))
        bias = rng.standard_normal(5)
        np.testing.assert_allclose(
            conv2d_forward(x, kernels, bias, "direct"),
            conv2d_forward(x, kernels, bias, "im2col"),
            rtol=1e-12,
            atol=1e-12,
        )

    def test_channel_mismatch(self):
        with pytest.raises(ConfigurationError):
            conv2d_forward(np.zeros((1, 3, 4, 4)), np.zeros((2, 4, 3, 3)), np.zeros(2))

    def test_unsupported_kernel_size(self):
        with pytest.raises(ConfigurationError):
            conv2d_forward(np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 5, 5)), np.zeros(1))

    def test_unknown_algorithm(self):
        with pytest.raises(ConfigurationError):
            conv2d_forward(np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 3, 3)), np.zeros(1), "fft")


class TestConvBackward:
    def test_zero_upstream_gives_zero_gradients(self, rng):
        x = rng.standard_normal((1, 2, 4, 4))
        kernels = rng.standard_normal((3, 2, 3, 3))
        grad = conv2d_backward(x, kernels, np.zeros((1, 3, 4, 4)))
        assert not grad.d_input.any()
        assert not grad.d_params["weight"].any()
        assert not grad.d_params["bias"].any()

    def test_upstream_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            conv2d_backward(np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 3, 3)), np.zeros((1, 1, 2, 2)))

    def test_gradient_shapes(self, rng):
        x = rng.standard_normal((2, 3, 4, 4))
        kernels = rng.standard_normal((5, 3, 3, 3))
        grad = conv2d_backward(x, kernels, rng.standard_normal((2, 5, 4, 4)))
        grad.check_shapes(x.shape, {"weight": kernels, "bias": np.zeros(5)})


class TestGradientSuite:
    """Analytic backward vs central finite differences in float64."""

    @pytest.mark.parametrize(
        "x_shape,k_shape",
        [((1, 2, 2, 2), (3, 2, 1, 1)), ((1, 1, 4, 4), (2, 1, 3, 3)), ((1, 2, 4, 4), (2, 2, 3, 3))],
    )
    def test_conv(self, rng, x_shape, k_shape):
        x = rng.standard_normal(x_shape)
        kernels = rng.standard_normal(k_shape)
        bias = rng.standard_normal(k_shape[0])
        upstream = rng.standard_normal((x_shape[0], k_shape[0], *x_shape[2:]))
        grad = conv2d_backward(x, kernels, upstream)

        assert check_gradient(lambda v: np.sum(conv2d_forward(v, kernels, bias) * upstream), x, grad.d_input) < TOL_64
        assert (
            check_gradient(lambda v: np.sum(conv2d_forward(x, v, bias) * upstream), kernels, grad.d_params["weight"])
            < TOL_64
        )
        assert (
            check_gradient(lambda v: np.sum(conv2d_forward(x, kernels, v) * upstream), bias, grad.d_params["bias"])
            < TOL_64
        )

    def test_maxpool(self, rng):
        x = _distinct(rng, (1, 2, 4, 4))
        y, record = maxpool2x2(x)
        upstream = rng.standard_normal(y.shape)
        grad = maxpool2x2_backward(record, upstream)
        assert check_gradient(lambda v: np.sum(maxpool2x2(v)[0] * upstream), x, grad.d_input) < TOL_64

    def test_gap(self, rng):
        x = rng.standard_normal((2, 3, 3, 3))
        upstream = rng.standard_normal((2, 3))
        grad = global_avg_pool_backward(x.shape, upstream)
        assert check_gradient(lambda v: np.sum(global_avg_pool(v) * upstream), x, grad.d_input) < TOL_64

    def test_dense(self, rng):
        x = rng.standard_normal((2, 3))
        w = rng.standard_normal((3, 2))
        b = rng.standard_normal(2)
        upstream = rng.standard_normal((2, 2))
        grad = dense_backward(x, w, upstream)
        assert check_gradient(lambda v: np.sum(dense_forward(v, w, b) * upstream), x, grad.d_input) < TOL_64
        assert check_gradient(lambda v: np.sum(dense_forward(x, v, b) * upstream), w, grad.d_params["weight"]) < TOL_64
        assert check_gradient(lambda v: np.sum(dense_forward(x, w, v) * upstream), b, grad.d_params["bias"]) < TOL_64

    def test_relu(self, rng):
        x = _distinct(rng, (4, 8))
        upstream = rng.standard_normal(x.shape)
        grad = relu_backward(x, upstream)
        assert check_gradient(lambda v: np.sum(relu(v) * upstream), x, grad.d_input) < TOL_64

    def test_softmax_cross_entropy(self, rng):
        logits = rng.standard_normal((3, 7))
        labels = [0, 4, 6]
        _, d_logits = softmax_cross_entropy(logits, labels)
        assert check_gradient(lambda v: softmax_cross_entropy(v, labels)[0], logits, d_logits) < TOL_64

    def test_l2(self, rng):
        w = rng.standard_normal((4, 5))
        _, grads = l2_penalty({"fc1.weight": w}, 0.01, ["fc1"])
        f = lambda v: l2_penalty({"fc1.weight": v}, 0.01, ["fc1"])[0]  # noqa: E731
        assert check_gradient(f, w, grads["fc1.weight"]) < TOL_64

    def test_float32_within_looser_bound(self, rng):
        x = rng.standard_normal((2, 3)).astype(np.float32)
        w = rng.standard_normal((3, 2)).astype(np.float32)
        b = np.zeros(2, np.float32)
        upstream = rng.standard_normal((2, 2)).astype(np.float32)
        grad = dense_backward(x, w, upstream)
        assert check_gradient(lambda v: np.sum(dense_forward(v, w, b) * upstream), x, grad.d_input) < 1e-3


class TestMaxPool:
    def test_shape(self):
        y, _ = maxpool2x2(np.zeros((1, 1, 224, 224), np.float32))
        assert y.shape == (1, 1, 112, 112)

    def test_constant_input(self):
        y, _ = maxpool2x2(np.full((1, 2, 4, 4), 3.5))
        assert np.all(y == 3.5)

    def test_routes_to_maximum(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        y, record = maxpool2x2(x)
        assert y[0, 0, 0, 0] == 4.0
        grad = maxpool2x2_backward(record, np.array([[[[5.0]]]]))
        np.testing.assert_array_equal(grad.d_input, [[[[0.0, 0.0], [0.0, 5.0]]]])

    def test_ties_route_to_one_position(self, rng):
        x = np.ones((2, 3, 4, 4))
        y, record = maxpool2x2(x)
        upstream = rng.standard_normal(y.shape)
        d = maxpool2x2_backward(record, upstream).d_input
        assert np.isclose(np.abs(d).sum(), np.abs(upstream).sum())
        assert np.count_nonzero(d) == upstream.size

    def test_odd_extent_rejected(self):
        with pytest.raises(DimensionError):
            maxpool2x2(np.zeros((1, 1, 3, 4)))


class TestGlobalAvgPool:
    def test_shape(self):
        assert global_avg_pool(np.zeros((1, 512, 7, 7), np.float32)).shape == (1, 512)

    def test_mean(self):
        assert global_avg_pool(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))[0, 0] == 2.5

    def test_constant(self):
        assert np.all(global_avg_pool(np.full((2, 3, 5, 5), 1.25)) == 1.25)

    def test_backward_uniform(self):
        d = global_avg_pool_backward((1, 1, 2, 2), np.array([[4.0]])).d_input
        np.testing.assert_array_equal(d, np.ones((1, 1, 2, 2)))


class TestDense:
    def test_identity(self, rng):
        x = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(dense_forward(x, np.eye(4), np.zeros(4)), x)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            dense_forward(np.zeros((1, 3)), np.zeros((4, 2)), np.zeros(2))


class TestRelu:
    def test_sign_cases(self):
        np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])

    def test_positive_unchanged(self):
        x = np.array([0.5, 1.0, 7.0])
        np.testing.assert_array_equal(relu(x), x)

    def test_dead_unit(self):
        d = relu_backward(np.array([-1.0, 0.0, 3.0]), np.array([10.0, 10.0, 10.0])).d_input
        np.testing.assert_array_equal(d, [0.0, 0.0, 10.0])


class TestDropout:
    def test_eval_is_identity(self, rng):
        x = rng.standard_normal((4, 10)).astype(np.float32)
        np.testing.assert_array_equal(dropout_apply(x, 0.2, "eval", seed=1), x)

    def test_rate_zero_is_identity(self, rng):
        x = rng.standard_normal((4, 10)).astype(np.float32)
        np.testing.assert_array_equal(dropout_apply(x, 0.0, "train", seed=1), x)

    def test_expectation(self):
        out = dropout_apply(np.ones(1_000_000, dtype=np.float64), 0.2, "train", seed=42)
        assert abs(out.mean() - 1.0) < 0.01

    def test_mask_values(self):
        mask = DropoutMask.generate((1000,), 0.2, seed=5, dtype=np.float64)
        assert mask.keep_probability == pytest.approx(0.8)
        assert set(np.unique(mask.mask)) <= {0.0, 1.0 / 0.8}

    def test_same_seed_same_mask(self):
        a = DropoutMask.generate((3, 7), 0.2, seed=9)
        b = DropoutMask.generate((3, 7), 0.2, seed=9)
        np.testing.assert_array_equal(a.mask, b.mask)

    def test_train_mode_deterministic(self, rng):
        x = rng.standard_normal((8, 8))
        np.testing.assert_array_equal(dropout_apply(x, 0.5, "train", 3), dropout_apply(x, 0.5, "train", 3))

    def test_backward_uses_mask(self):
        mask = DropoutMask.generate((50,), 0.2, seed=1, dtype=np.float64)
        d = dropout_backward(mask, np.ones(50)).d_input
        np.testing.assert_array_equal(d, mask.mask)

    @pytest.mark.parametrize("rate", [1.0, 1.5, -0.1])
    def test_bad_rate(self, rate):
        with pytest.raises(ConfigurationError):
            dropout_apply(np.ones(3), rate, "train", 0)


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        loss, _ = softmax_cross_entropy(np.zeros((4, 7)), [0, 1, 2, 3])
        assert loss == pytest.approx(math.log(7), abs=1e-6)

    def test_saturated_correct_prediction(self):
        logits = np.zeros((1, 7))
        logits[0, 2] = 1000.0
        loss, d_logits = softmax_cross_entropy(logits, [2])
        assert loss == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(d_logits, 0.0, atol=1e-9)

    def test_closed_form(self):
        loss, _ = softmax_cross_entropy(np.array([[0, 0, 0, 0, 0, 0, 1.0]]), [6])
        assert loss == pytest.approx(math.log(6 + math.e) - 1, abs=1e-6)
        assert loss == pytest.approx(1.165423, abs=1e-5)

    def test_softmax_rows_sum_to_one(self, rng):
        probs = softmax(rng.standard_normal((5, 7)) * 10)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_loss_non_negative(self, rng):
        loss, _ = softmax_cross_entropy(rng.standard_normal((6, 7)), [0, 1, 2, 3, 4, 5])
        assert loss >= 0.0

    @pytest.mark.parametrize("label", [7, -1])
    def test_out_of_range_label(self, label):
        with pytest.raises(DataError):
            softmax_cross_entropy(np.zeros((1, 7)), [label])


class TestL2Penalty:
    def test_zero_weights(self):
        penalty, grads = l2_penalty({"fc1.weight": np.zeros((2, 2)), "fc1.bias": np.ones(2)}, 0.01, ["fc1"])
        assert penalty == 0.0
        assert not grads["fc1.weight"].any()

    def test_single_weight(self):
        penalty, grads = l2_penalty({"fc1.weight": np.array([[3.0]])}, 0.01, ["fc1"])
        assert penalty == pytest.approx(0.09)
        assert grads["fc1.weight"][0, 0] == pytest.approx(0.06)

    def test_empty_scope(self):
        penalty, grads = l2_penalty({"fc1.weight": np.ones((2, 2))}, 0.01, [])
        assert penalty == 0.0
        assert grads == {}

    def test_biases_excluded(self):
        _, grads = l2_penalty({"fc1.weight": np.ones((2, 2)), "fc1.bias": np.ones(2)}, 0.01, ["fc1"])
        assert "fc1.bias" not in grads

    def test_unknown_scope(self):
        with pytest.raises(ConfigurationError):
            l2_penalty({"fc1.weight": np.ones(1)}, 0.01, ["fc9"])


class TestRelativeError:
    def test_exact_zeros_agree(self):
        assert relative_error(0.0, 0.0) == 0.0

    def test_small_gradients_are_not_absorbed(self):
        # a 1e-6 gradient against 0 is a full mismatch, not within tolerance
        assert relative_error(1e-6, 0.0) == pytest.approx(1.0)
        assert relative_error(2e-6, 1e-6) == pytest.approx(0.5)

    def test_plain_relative_error(self):
        assert relative_error(1.0, 1.0 + 1e-7) < 1e-6
        assert relative_error(1.0, 1.0 + 1e-5) > 1e-6
