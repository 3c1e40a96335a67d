"""
Sequential Networks, Losses and Backpropagation
===============================================

A :class:`Sequential` is an ordered list of layers with a batched forward
pass and a reverse-mode backward pass. Losses return both their value and
the gradient with respect to the network output, so :func:`backprop` works
for any loss with the same signature.

Non-finite values are caught after every layer (forward and backward) and
surfaced as :class:`NumericalError` naming the layer.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from core.layers import Cache, Layer, Tensor
from exceptions import InputDomainError, NumericalError


logger = logging.getLogger(__name__)

CE_PROB_FLOOR = 1e-12

LossFn = Callable[[Tensor, np.ndarray], tuple[float, Tensor]]


def _all_finite(value) -> bool:
    if value is None:
        return True
    if isinstance(value, (list, tuple)):
        return all(_all_finite(v) for v in value)
    arr = np.asarray(value)
    if not (np.issubdtype(arr.dtype, np.floating) or np.issubdtype(arr.dtype, np.complexfloating)):
        return True
    return bool(np.isfinite(arr).all())


class Sequential:
    """
    Ordered stack of layers.

    Parameters are addressed as "<layer name>.<param name>"; layer names must
    be unique within a network.
    """

    def __init__(self, name: str, layers: Sequence[Layer]):
        names = [layer.name for layer in layers]
        if len(set(names)) != len(names):
            raise ValueError(f"Duplicate layer names in {name}: {names}")
        self.name = name
        self.layers = list(layers)

    def __iter__(self) -> Iterator[Layer]:
        return iter(self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    def forward(self, x) -> tuple[Tensor, list[Cache]]:
        caches = []
        for index, layer in enumerate(self.layers):
            x, cache = layer.forward(x)
            if not _all_finite(x):
                raise NumericalError(index, f"{self.name}/{layer.name}", "forward")
            caches.append(cache)
        return x, caches

    def backward(self, caches: list[Cache], grad_out) -> tuple[Optional[Tensor], dict[str, Tensor]]:
        grads: dict[str, Tensor] = {}
        grad = grad_out
        for index in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[index]
            grad, layer_grads = layer.backward(caches[index], grad)
            if not _all_finite(grad) or not _all_finite(list(layer_grads.values())):
                raise NumericalError(index, f"{self.name}/{layer.name}", "backward")
            for key, value in layer_grads.items():
                grads[f"{layer.name}.{key}"] = value
        return grad, grads

    def parameters(self) -> dict[str, Tensor]:
        """Live references to every parameter tensor, in layer order."""
        return {
            f"{layer.name}.{key}": value
            for layer in self.layers
            for key, value in layer.params.items()
        }

    def set_parameter(self, qualified_name: str, value: Tensor) -> None:
        layer_name, key = qualified_name.rsplit(".", 1)
        for layer in self.layers:
            if layer.name == layer_name:
                layer.params[key] = value
                return
        raise KeyError(qualified_name)

    def parameter_count(self) -> int:
        return sum(layer.parameter_count() for layer in self.layers)

    def initialize(self, rng: np.random.Generator) -> None:
        for layer in self.layers:
            layer.initialize(rng)

    def astype(self, dtype) -> "Sequential":
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def output_shapes(self, input_shape: tuple) -> list[tuple]:
        shapes = []
        shape = input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
            shapes.append(shape)
        return shapes

    def kink_signature(self, caches: list[Cache]) -> list[np.ndarray]:
        signature = []
        for layer, cache in zip(self.layers, caches):
            pattern = layer.kink_signature(cache)
            if pattern is not None:
                signature.append(pattern)
        return signature


# =============================================================================
# Losses
# =============================================================================

def cross_entropy_loss(probs: Tensor, label: int) -> float:
    """-ln(probs[label]) with the probability clamped below by CE_PROB_FLOOR."""
    M = probs.shape[-1]
    if not 0 <= int(label) < M:
        raise InputDomainError("label", int(label), f"[0, {M})")
    return float(-np.log(max(float(probs[int(label)]), CE_PROB_FLOOR)))


def _check_labels(labels: np.ndarray, M: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= M):
        bad = int(labels.min()) if labels.min() < 0 else int(labels.max())
        raise InputDomainError("label", bad, f"[0, {M})")


def mean_cross_entropy(probs: Tensor, labels: np.ndarray) -> tuple[float, Tensor]:
    """
    Mean categorical cross entropy over a batch and its gradient w.r.t. probs.

    Below the floor the clamped loss is flat, so the gradient there is 0.
    """
    labels = np.asarray(labels)
    B, M = probs.shape
    _check_labels(labels, M)
    picked = probs[np.arange(B), labels].astype(np.float64)
    loss = float(-np.log(np.maximum(picked, CE_PROB_FLOOR)).mean())
    grad = np.zeros_like(probs)
    live = picked > CE_PROB_FLOOR
    grad[np.arange(B)[live], labels[live]] = (-1.0 / (picked[live] * B)).astype(probs.dtype)
    return loss, grad


def softmax_cross_entropy_grad(probs: Tensor, labels: np.ndarray) -> Tensor:
    """
    Gradient of the mean cross entropy w.r.t. the softmax *inputs*: (p - onehot) / B.

    Exact wherever p[label] exceeds the floor; used by the trainer to skip
    the softmax Jacobian.
    """
    labels = np.asarray(labels)
    B, M = probs.shape
    _check_labels(labels, M)
    grad = probs.copy()
    grad[np.arange(B), labels] -= 1
    return grad / np.asarray(B, dtype=probs.dtype)


def squared_error_loss(output: Tensor, target: Tensor) -> tuple[float, Tensor]:
    """Sum of squared errors, summed over features and averaged over the batch."""
    diff = output - target
    B = output.shape[0]
    return float((diff.astype(np.float64) ** 2).sum() / B), (2 * diff / B).astype(output.dtype)


def accuracy(probs: Tensor, labels: np.ndarray) -> float:
    """Fraction of argmax decisions (ties -> lowest index) equal to the labels."""
    return float((probs.argmax(axis=-1) == np.asarray(labels)).mean())


# =============================================================================
# Backpropagation
# =============================================================================

@dataclass
class BackpropResult:
    loss: float
    grads: dict[str, Tensor]
    grad_input: Optional[Tensor]
    output: Tensor


def backprop(
    network: Sequential,
    inputs,
    targets,
    loss: LossFn = mean_cross_entropy,
    grad_scale: float = 1.0,
) -> BackpropResult:
    """
    Exact reverse-mode gradients of `loss(network(inputs), targets)`.

    Args:
        network: The layer stack (ends in Softmax for the cross-entropy loss)
        inputs: Batched network input
        targets: Labels or target tensor, passed through to the loss
        loss: Callable returning (value, d value / d output)
        grad_scale: Multiplies the upstream gradient (0 gives zero gradients)

    Returns:
        BackpropResult with gradients keyed like network.parameters()
    """
    output, caches = network.forward(inputs)
    value, grad_out = loss(output, targets)
    if not np.isfinite(value):
        raise NumericalError(len(network) - 1, f"{network.name}/loss", "forward")
    grad_input, grads = network.backward(caches, grad_out * grad_scale)
    return BackpropResult(loss=value, grads=grads, grad_input=grad_input, output=output)
