"""Forward rules, shapes and parameter counts of every layer kind."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core.layers import (
    Concatenate,
    Conv1D,
    Dense,
    Embedding,
    Flatten,
    LayerKind,
    LayerSpec,
    MaxPool1D,
    NormalizeComplex,
    RealComplexMarshal,
    ReLU,
    Reshape,
    Softmax,
    conv1d_forward,
    dense_forward,
    embedding_forward,
    maxpool1d,
    relu,
    softmax,
)
from exceptions import InputDomainError, StructuralError


class TestEmbedding:

    def test_identity_table_selects_one_hot(self):
        table = np.eye(4, dtype=np.float32)
        assert_array_equal(embedding_forward(table, 2), [0, 0, 1, 0])

    def test_selects_exact_row(self, rng):
        table = rng.normal(size=(3, 2)).astype(np.float32)
        assert embedding_forward(table, 1).tobytes() == table[1].tobytes()

    def test_out_of_range_index_rejected(self):
        with pytest.raises(InputDomainError):
            embedding_forward(np.eye(4, dtype=np.float32), 4)
        with pytest.raises(InputDomainError):
            embedding_forward(np.eye(4, dtype=np.float32), -1)

    def test_non_integer_index_rejected(self):
        with pytest.raises(InputDomainError):
            embedding_forward(np.eye(4, dtype=np.float32), 1.5)

    def test_parameter_count(self):
        assert Embedding("e", 128, 128).parameter_count() == 16384
        assert LayerSpec(LayerKind.EMBEDDING, fan_in=128, fan_out=128).parameter_count() == 16384


class TestDense:

    def test_identity(self):
        x = np.array([0.5, -2.0, 3.0], dtype=np.float32)
        assert_array_equal(dense_forward(np.eye(3, dtype=np.float32), np.zeros(3, np.float32), x), x)

    def test_hand_arithmetic(self):
        w = np.array([[1, 2], [3, 4]], dtype=np.float32)
        b = np.array([1, -1], dtype=np.float32)
        assert_array_equal(dense_forward(w, b, np.array([1, 1], dtype=np.float32)), [4, 6])

    def test_parameter_count(self):
        assert Dense("d", 128, 128).parameter_count() == 16512
        assert LayerSpec(LayerKind.DENSE, fan_in=128, fan_out=128).parameter_count() == 16512

    def test_wrong_input_width(self):
        with pytest.raises(StructuralError):
            dense_forward(np.zeros((2, 3), np.float32), np.zeros(2, np.float32), np.zeros(4, np.float32))

    def test_bias_shape_checked(self):
        with pytest.raises(StructuralError):
            dense_forward(np.zeros((2, 3), np.float32), np.zeros(3, np.float32), np.zeros(3, np.float32))


class TestConv1D:

    def test_sfe_first_convolution(self):
        layer = Conv1D("c", 2, 128, 3)
        assert layer.parameter_count() == 896
        assert layer.output_shape((47, 2)) == (45, 128)

    def test_sfe_second_convolution(self):
        layer = Conv1D("c", 128, 64, 16)
        assert layer.parameter_count() == 131136
        assert layer.output_shape((45, 128)) == (30, 64)

    def test_identity_kernel(self, rng):
        x = rng.normal(size=(6, 1)).astype(np.float32)
        y = conv1d_forward(np.ones((1, 1, 1), np.float32), np.zeros(1, np.float32), x)
        assert_array_equal(y, x)

    def test_matches_direct_sum(self, rng):
        kernels = rng.normal(size=(3, 4, 2)).astype(np.float32)
        bias = rng.normal(size=3).astype(np.float32)
        x = rng.normal(size=(9, 2)).astype(np.float32)
        y = conv1d_forward(kernels, bias, x)
        expected = np.array([
            [(kernels[c] * x[t:t + 4]).sum() + bias[c] for c in range(3)]
            for t in range(6)
        ])
        assert_allclose(y, expected, rtol=1e-5, atol=1e-5)

    def test_input_shorter_than_kernel(self):
        with pytest.raises(StructuralError):
            conv1d_forward(np.zeros((1, 5, 1), np.float32), np.zeros(1, np.float32), np.zeros((3, 1), np.float32))


class TestMaxPool:

    def test_pool_one_is_identity(self, rng):
        x = rng.normal(size=(45, 4)).astype(np.float32)
        assert_array_equal(maxpool1d(x, 1), x)
        assert MaxPool1D("p", 1).output_shape((45, 128)) == (45, 128)

    def test_pool_two(self):
        assert_array_equal(maxpool1d(np.array([[3], [1], [4], [1]], np.float32), 2), [[3], [4]])
        assert MaxPool1D("p", 2).output_shape((30, 64)) == (15, 64)

    def test_trailing_remainder_dropped(self):
        x = np.array([[1], [2], [3], [4], [9]], np.float32)
        assert_array_equal(maxpool1d(x, 2), [[2], [4]])

    def test_gradient_goes_to_first_maximum(self):
        layer = MaxPool1D("p", 2)
        x = np.array([[[5.0], [5.0], [1.0], [2.0]]], np.float32)
        _, cache = layer.forward(x)
        grad, _ = layer.backward(cache, np.ones((1, 2, 1), np.float32))
        assert_array_equal(grad[0, :, 0], [1, 0, 0, 1])

    def test_invalid_pool(self):
        with pytest.raises(InputDomainError):
            MaxPool1D("p", 0)


class TestActivations:

    def test_relu(self):
        assert_array_equal(relu(np.array([-1.0, 0.0, 2.0], np.float32)), [0, 0, 2])

    def test_relu_derivative_zero_at_zero(self):
        layer = ReLU("r")
        _, mask = layer.forward(np.array([[0.0, 1.0]], np.float32))
        grad, _ = layer.backward(mask, np.ones((1, 2), np.float32))
        assert_array_equal(grad, [[0, 1]])

    def test_softmax_uniform(self):
        assert_allclose(softmax(np.zeros(4, np.float32)), [0.25] * 4)

    def test_softmax_closed_form(self):
        assert_allclose(softmax(np.array([0.0, math.log(3.0)])), [0.25, 0.75], rtol=1e-12)

    def test_softmax_is_stable_for_large_logits(self):
        p = softmax(np.array([1000.0, 1000.0], np.float32))
        assert np.isfinite(p).all()
        assert_allclose(p, [0.5, 0.5])

    def test_softmax_backward_sums_to_zero(self, rng):
        layer = Softmax("s")
        p, cache = layer.forward(rng.normal(size=(3, 5)).astype(np.float32))
        grad, _ = layer.backward(cache, rng.normal(size=(3, 5)).astype(np.float32))
        assert_allclose(grad.sum(axis=-1), 0.0, atol=1e-6)


class TestShapeLayers:

    def test_reshape_round_trip(self, rng):
        layer = Reshape("r", (47, 2))
        x = rng.normal(size=(2, 94)).astype(np.float32)
        y, cache = layer.forward(x)
        assert y.shape == (2, 47, 2)
        back, _ = layer.backward(cache, y)
        assert_array_equal(back, x)

    def test_reshape_size_mismatch(self):
        with pytest.raises(StructuralError):
            Reshape("r", (5, 2)).forward(np.zeros((1, 11), np.float32))

    def test_flatten(self):
        assert Flatten("f").output_shape((15, 64)) == (960,)

    def test_concatenate_splits_gradient(self, rng):
        layer = Concatenate("c")
        a, b = rng.normal(size=(2, 94)), rng.normal(size=(2, 10))
        y, cache = layer.forward([a, b])
        assert y.shape == (2, 104)
        ga, gb = layer.backward(cache, y)[0]
        assert_array_equal(ga, a)
        assert_array_equal(gb, b)
        assert layer.output_shape([(94,), (10,)]) == (104,)


class TestNormalizeAndMarshal:

    def test_inside_disk_unchanged(self):
        x = np.array([[0.3, 0.4, -0.1, 0.2]], np.float32)
        y, _ = NormalizeComplex("n").forward(x)
        assert_array_equal(y, x)

    def test_outside_disk_projected(self):
        y, _ = NormalizeComplex("n").forward(np.array([[3.0, 4.0]], np.float32))
        assert_allclose(y, [[0.6, 0.8]], rtol=1e-6)

    def test_real_to_complex_pairs(self):
        z, _ = RealComplexMarshal("m", "real2complex").forward(np.array([[1, 2, 3, 4]], np.float32))
        assert z.dtype == np.complex64
        assert_array_equal(z, [[1 + 2j, 3 + 4j]])

    def test_complex_to_real_interleaves(self):
        x, _ = RealComplexMarshal("m", "complex2real").forward(np.array([[1 + 2j, 3 + 4j]], np.complex64))
        assert x.dtype == np.float32
        assert_array_equal(x, [[1, 2, 3, 4]])

    def test_odd_width_rejected(self):
        with pytest.raises(StructuralError):
            RealComplexMarshal("m", "real2complex").forward(np.zeros((1, 3), np.float32))

    def test_unknown_direction(self):
        with pytest.raises(InputDomainError):
            RealComplexMarshal("m", "sideways")
