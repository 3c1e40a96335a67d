"""Sequential networks, losses and backprop."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from core.gradcheck import finite_diff_gradient
from core.layers import Dense, ReLU, Softmax
from core.network import (
    Sequential,
    accuracy,
    backprop,
    cross_entropy_loss,
    mean_cross_entropy,
    softmax_cross_entropy_grad,
    squared_error_loss,
)
from exceptions import InputDomainError, NumericalError


def small_net(rng, dtype=np.float32) -> Sequential:
    net = Sequential("net", [Dense("d1", 4, 6), ReLU("r1"), Dense("d2", 6, 3), Softmax("sm")])
    net.initialize(rng)
    return net.astype(dtype)


class TestLosses:

    def test_one_hot_prediction_has_zero_loss(self):
        assert cross_entropy_loss(np.array([0.0, 1.0, 0.0]), 1) == 0.0

    def test_uniform_loss_is_ln_m(self):
        assert cross_entropy_loss(np.full(128, 1 / 128), 5) == pytest.approx(4.852, abs=1e-3)

    def test_half_probability(self):
        assert cross_entropy_loss(np.array([0.5, 0.5]), 0) == pytest.approx(math.log(2))

    def test_zero_probability_clamped(self):
        assert np.isfinite(cross_entropy_loss(np.array([1.0, 0.0]), 1))

    def test_label_out_of_range(self):
        with pytest.raises(InputDomainError):
            cross_entropy_loss(np.array([0.5, 0.5]), 2)
        with pytest.raises(InputDomainError):
            mean_cross_entropy(np.full((2, 2), 0.5), np.array([0, 3]))

    def test_fused_gradient_matches_softmax_chain(self, rng):
        logits = rng.normal(size=(5, 4))
        labels = rng.integers(0, 4, size=5)
        layer = Softmax("sm")
        probs, cache = layer.forward(logits)
        _, grad_probs = mean_cross_entropy(probs, labels)
        chained, _ = layer.backward(cache, grad_probs)
        assert_allclose(softmax_cross_entropy_grad(probs, labels), chained, atol=1e-12)

    def test_accuracy_ties_go_to_lowest_index(self):
        probs = np.array([[0.5, 0.5], [0.2, 0.8]])
        assert accuracy(probs, np.array([0, 1])) == 1.0


class TestBackprop:

    def test_single_dense_squared_loss_closed_form(self, rng):
        layer = Dense("d", 3, 2)
        layer.initialize(rng)
        net = Sequential("toy", [layer])
        x = rng.normal(size=(1, 3)).astype(np.float32)
        t = rng.normal(size=(1, 2)).astype(np.float32)
        result = backprop(net, x, t, loss=squared_error_loss)
        residual = x @ layer.params["weight"].T + layer.params["bias"] - t
        assert_allclose(result.grads["d.weight"], 2 * residual.T @ x, rtol=1e-5, atol=1e-6)
        assert_allclose(result.grads["d.bias"], 2 * residual[0], rtol=1e-5, atol=1e-6)

    def test_gradients_match_finite_differences(self, rng):
        net = small_net(rng, np.float64)
        x = rng.normal(size=(4, 4))
        labels = rng.integers(0, 3, size=4)
        result = backprop(net, x, labels)

        def loss():
            probs, _ = net.forward(x)
            return mean_cross_entropy(probs, labels)[0]

        for name, param in net.parameters().items():
            numeric = finite_diff_gradient(loss, param, eps=1e-6)
            assert_allclose(numeric, result.grads[name], rtol=1e-4, atol=1e-7)

    def test_zero_upstream_gradient(self, rng):
        net = small_net(rng)
        x = rng.normal(size=(3, 4)).astype(np.float32)
        result = backprop(net, x, np.array([0, 1, 2]), grad_scale=0.0)
        for grad in result.grads.values():
            assert not grad.any()

    def test_non_finite_activation_names_layer(self, rng):
        net = small_net(rng)
        net.layers[2].params["weight"][0, 0] = np.inf
        with pytest.raises(NumericalError) as exc:
            net.forward(np.ones((1, 4), np.float32))
        assert exc.value.details["layer_name"] == "net/d2"
        assert exc.value.details["layer_index"] == 2


class TestSequential:

    def test_duplicate_layer_names_rejected(self):
        with pytest.raises(ValueError):
            Sequential("bad", [ReLU("r"), ReLU("r")])

    def test_parameters_are_qualified(self, rng):
        net = small_net(rng)
        assert list(net.parameters()) == ["d1.weight", "d1.bias", "d2.weight", "d2.bias"]
        assert net.parameter_count() == 4 * 6 + 6 + 6 * 3 + 3

    def test_output_shapes(self, rng):
        assert small_net(rng).output_shapes((4,)) == [(6,), (6,), (3,), (3,)]

    def test_set_parameter_unknown(self, rng):
        with pytest.raises(KeyError):
            small_net(rng).set_parameter("nope.weight", np.zeros(1))
