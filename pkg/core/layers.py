"""
Layer Kinds of the Differentiable Network Core
==============================================

Every layer the transceiver needs, each with a forward rule and an exact
backward rule. Layers are batched: the leading axis of every input is the
batch axis. The primitive operations (``embedding_forward``,
``dense_forward``, ``conv1d_forward``, ``maxpool1d``, ``relu``, ``softmax``)
are plain functions that also accept unbatched inputs; the layer classes
wrap them and add the backward pass.

Conventions
-----------
- Real tensors are ``np.float32`` unless a layer has been cast with
  :meth:`Layer.astype` (the gradient checker runs some checks in float64).
- Complex tensors carry the gradient of a real loss L as
  ``dL/d(re) + 1j * dL/d(im)``.
- ``forward`` returns ``(output, cache)``; ``backward(cache, grad_out)``
  returns ``(grad_in, {param_name: grad})``. Neither mutates the layer, so a
  layer with fixed parameters can be shared between concurrent callers.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional, Sequence

import numpy as np

from exceptions import InputDomainError, StructuralError


logger = logging.getLogger(__name__)

DTYPE = np.float32
EMBEDDING_INIT_RANGE = 0.05

Tensor = np.ndarray
Cache = Any


class LayerKind(str, Enum):
    EMBEDDING = "embedding"
    DENSE = "dense"
    CONV1D = "conv1d"
    MAXPOOL1D = "maxpool1d"
    RELU = "relu"
    SOFTMAX = "softmax"
    RESHAPE = "reshape"
    FLATTEN = "flatten"
    CONCATENATE = "concatenate"
    NORMALIZE_COMPLEX = "normalize-complex"
    REAL_COMPLEX_MARSHAL = "real-complex-marshal"


@dataclass(frozen=True)
class LayerSpec:
    """
    Kind plus kind-specific hyperparameters.

    The parameter count is a pure function of the hyperparameters:
        embedding  fan_in * fan_out            (M x d table)
        dense      fan_in * fan_out + fan_out
        conv1d     kernel_length * in_channels * out_channels + out_channels
        others     0
    """
    kind: LayerKind
    fan_in: int = 0
    fan_out: int = 0
    kernel_length: int = 0
    in_channels: int = 0
    out_channels: int = 0
    pool: int = 0

    def parameter_count(self) -> int:
        if self.kind == LayerKind.EMBEDDING:
            return self.fan_in * self.fan_out
        if self.kind == LayerKind.DENSE:
            return self.fan_in * self.fan_out + self.fan_out
        if self.kind == LayerKind.CONV1D:
            return self.kernel_length * self.in_channels * self.out_channels + self.out_channels
        return 0


def complex_dtype_for(real_dtype) -> np.dtype:
    return np.dtype(np.complex128) if np.dtype(real_dtype) == np.float64 else np.dtype(np.complex64)


def real_dtype_for(complex_dtype) -> np.dtype:
    return np.dtype(np.float64) if np.dtype(complex_dtype) == np.complex128 else np.dtype(np.float32)


# =============================================================================
# Primitive operations
# =============================================================================

def embedding_forward(table: Tensor, index) -> Tensor:
    """Row `index` of an M x d table (index may be an integer array)."""
    idx = np.asarray(index)
    if not np.issubdtype(idx.dtype, np.integer):
        raise InputDomainError("index", index, "integers")
    M = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= M):
        bad = int(idx.min()) if idx.min() < 0 else int(idx.max())
        raise InputDomainError("index", bad, f"[0, {M})")
    return table[idx]


def dense_forward(weights: Tensor, bias: Tensor, x: Tensor) -> Tensor:
    """y = W x + b for x of shape (in,) or (B, in)."""
    out_dim, in_dim = weights.shape
    if bias.shape != (out_dim,):
        raise StructuralError("dense bias", (out_dim,), bias.shape)
    if x.shape[-1] != in_dim:
        raise StructuralError("dense input", in_dim, x.shape[-1])
    return x @ weights.T + bias


def _windows(x: Tensor, k_len: int) -> Tensor:
    # (B, L, C) -> (B, L-k+1, k, C) view
    return np.lib.stride_tricks.sliding_window_view(x, k_len, axis=1).transpose(0, 1, 3, 2)


def conv1d_forward(kernels: Tensor, bias: Tensor, x: Tensor) -> Tensor:
    """
    Valid (no padding), stride-1 cross-correlation.

    kernels: (out_ch, k_len, in_ch); x: (L, in_ch) or (B, L, in_ch)
    returns (L - k_len + 1, out_ch) (batched accordingly)
    """
    batched = x.ndim == 3
    xb = x if batched else x[None]
    out_ch, k_len, in_ch = kernels.shape
    if xb.shape[-1] != in_ch:
        raise StructuralError("conv1d input channels", in_ch, xb.shape[-1])
    if xb.shape[1] < k_len:
        raise StructuralError("conv1d input length", f">= {k_len}", xb.shape[1])
    y = np.tensordot(_windows(xb, k_len), kernels, axes=([2, 3], [1, 2])) + bias
    return y if batched else y[0]


def _pool_view(x: Tensor, pool: int) -> Tensor:
    B, L, C = x.shape
    out_len = L // pool
    return x[:, :out_len * pool].reshape(B, out_len, pool, C)


def maxpool1d(x: Tensor, pool: int) -> Tensor:
    """Channel-wise max over non-overlapping windows; trailing remainder dropped."""
    if pool < 1:
        raise InputDomainError("pool", pool, ">= 1")
    batched = x.ndim == 3
    xb = x if batched else x[None]
    y = _pool_view(xb, pool).max(axis=2)
    return y if batched else y[0]


def relu(x: Tensor) -> Tensor:
    return np.where(x > 0, x, np.zeros((), dtype=x.dtype))


def softmax(v: Tensor) -> Tensor:
    """Softmax along the last axis, stabilized by max-subtraction."""
    z = v - v.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# =============================================================================
# Layer base class
# =============================================================================

class Layer(ABC):
    """
    Base class of all layers.

    Subclasses define `kind`, `spec`, `forward`, `backward` and
    `output_shape`. Parametrized layers keep their tensors in `params`.
    """

    kind: LayerKind

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, Tensor] = {}

    @property
    def spec(self) -> LayerSpec:
        return LayerSpec(kind=self.kind)

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def initialize(self, rng: np.random.Generator) -> None:
        """Draw fresh parameters (no-op for parameter-free layers)."""

    def astype(self, dtype) -> "Layer":
        for key, value in self.params.items():
            self.params[key] = value.astype(dtype)
        return self

    @abstractmethod
    def forward(self, x) -> tuple[Any, Cache]:
        ...

    @abstractmethod
    def backward(self, cache: Cache, grad_out) -> tuple[Any, dict[str, Tensor]]:
        ...

    @abstractmethod
    def output_shape(self, input_shape: tuple) -> tuple:
        """Per-sample output shape for a per-sample input shape."""

    def kink_signature(self, cache: Cache) -> Optional[np.ndarray]:
        """Branch pattern of a piecewise layer (None when smooth)."""
        return None

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(name={self.name!r}, params={self.parameter_count()})"


def _glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(DTYPE)


# =============================================================================
# Parametrized layers
# =============================================================================

class Embedding(Layer):
    """Lookup table M x d; input is a batch of integer symbols."""

    kind = LayerKind.EMBEDDING

    def __init__(self, name: str, num_embeddings: int, dim: int):
        super().__init__(name)
        self.num_embeddings = num_embeddings
        self.dim = dim
        self.params = {"table": np.zeros((num_embeddings, dim), dtype=DTYPE)}

    @property
    def spec(self) -> LayerSpec:
        return LayerSpec(kind=self.kind, fan_in=self.num_embeddings, fan_out=self.dim)

    def initialize(self, rng: np.random.Generator) -> None:
        self.params["table"] = rng.uniform(
            -EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE, size=(self.num_embeddings, self.dim)
        ).astype(DTYPE)

    def forward(self, x):
        idx = np.asarray(x)
        return embedding_forward(self.params["table"], idx), idx

    def backward(self, cache, grad_out):
        grad_table = np.zeros_like(self.params["table"])
        np.add.at(grad_table, cache, grad_out)
        return None, {"table": grad_table}

    def output_shape(self, input_shape: tuple) -> tuple:
        return (self.dim,)


class Dense(Layer):
    """Fully connected layer; activations are separate layers."""

    kind = LayerKind.DENSE

    def __init__(self, name: str, fan_in: int, fan_out: int):
        super().__init__(name)
        self.fan_in = fan_in
        self.fan_out = fan_out
        self.params = {
            "weight": np.zeros((fan_out, fan_in), dtype=DTYPE),
            "bias": np.zeros((fan_out,), dtype=DTYPE),
        }

    @property
    def spec(self) -> LayerSpec:
        return LayerSpec(kind=self.kind, fan_in=self.fan_in, fan_out=self.fan_out)

    def initialize(self, rng: np.random.Generator) -> None:
        self.params["weight"] = _glorot(rng, (self.fan_out, self.fan_in), self.fan_in, self.fan_out)
        self.params["bias"] = np.zeros((self.fan_out,), dtype=DTYPE)

    def forward(self, x):
        if x.ndim != 2:
            raise StructuralError(f"dense '{self.name}' input rank", 2, x.ndim)
        return dense_forward(self.params["weight"], self.params["bias"], x), x

    def backward(self, cache, grad_out):
        x = cache
        grads = {
            "weight": grad_out.T @ x,
            "bias": grad_out.sum(axis=0),
        }
        return grad_out @ self.params["weight"], grads

    def output_shape(self, input_shape: tuple) -> tuple:
        if input_shape[-1] != self.fan_in:
            raise StructuralError(f"dense '{self.name}' input", self.fan_in, input_shape[-1])
        return (self.fan_out,)


class Conv1D(Layer):
    """Valid stride-1 1-D convolution over a (length, channels) input."""

    kind = LayerKind.CONV1D

    def __init__(self, name: str, in_channels: int, out_channels: int, kernel_length: int):
        super().__init__(name)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_length = kernel_length
        self.params = {
            "kernels": np.zeros((out_channels, kernel_length, in_channels), dtype=DTYPE),
            "bias": np.zeros((out_channels,), dtype=DTYPE),
        }

    @property
    def spec(self) -> LayerSpec:
        return LayerSpec(
            kind=self.kind,
            kernel_length=self.kernel_length,
            in_channels=self.in_channels,
            out_channels=self.out_channels,
        )

    def initialize(self, rng: np.random.Generator) -> None:
        shape = (self.out_channels, self.kernel_length, self.in_channels)
        self.params["kernels"] = _glorot(
            rng, shape,
            self.kernel_length * self.in_channels,
            self.kernel_length * self.out_channels,
        )
        self.params["bias"] = np.zeros((self.out_channels,), dtype=DTYPE)

    def forward(self, x):
        if x.ndim != 3:
            raise StructuralError(f"conv1d '{self.name}' input rank", 3, x.ndim)
        y = conv1d_forward(self.params["kernels"], self.params["bias"], x)
        return y, x

    def backward(self, cache, grad_out):
        x = cache
        k_len = self.kernel_length
        cols = _windows(x, k_len)
        grads = {
            "kernels": np.tensordot(grad_out, cols, axes=([0, 1], [0, 1])),
            "bias": grad_out.sum(axis=(0, 1)),
        }
        dcols = np.tensordot(grad_out, self.params["kernels"], axes=([2], [0]))
        grad_x = np.zeros_like(x)
        out_len = grad_out.shape[1]
        for j in range(k_len):
            grad_x[:, j:j + out_len, :] += dcols[:, :, j, :]
        return grad_x, grads

    def output_shape(self, input_shape: tuple) -> tuple:
        length, channels = input_shape
        if channels != self.in_channels:
            raise StructuralError(f"conv1d '{self.name}' channels", self.in_channels, channels)
        if length < self.kernel_length:
            raise StructuralError(f"conv1d '{self.name}' length", f">= {self.kernel_length}", length)
        return (length - self.kernel_length + 1, self.out_channels)


# =============================================================================
# Parameter-free layers
# =============================================================================

class MaxPool1D(Layer):
    """Non-overlapping max pooling; gradient routed to the first maximal element."""

    kind = LayerKind.MAXPOOL1D

    def __init__(self, name: str, pool: int):
        super().__init__(name)
        if pool < 1:
            raise InputDomainError("pool", pool, ">= 1")
        self.pool = pool

    @property
    def spec(self) -> LayerSpec:
        return LayerSpec(kind=self.kind, pool=self.pool)

    def forward(self, x):
        view = _pool_view(x, self.pool)
        idx = view.argmax(axis=2)
        y = np.take_along_axis(view, idx[:, :, None, :], axis=2)[:, :, 0, :]
        return y, (x.shape, idx)

    def backward(self, cache, grad_out):
        shape, idx = cache
        B, L, C = shape
        out_len = idx.shape[1]
        grad_view = np.zeros((B, out_len, self.pool, C), dtype=grad_out.dtype)
        np.put_along_axis(grad_view, idx[:, :, None, :], grad_out[:, :, None, :], axis=2)
        grad_x = np.zeros(shape, dtype=grad_out.dtype)
        grad_x[:, :out_len * self.pool] = grad_view.reshape(B, out_len * self.pool, C)
        return grad_x, {}

    def output_shape(self, input_shape: tuple) -> tuple:
        length, channels = input_shape
        return (length // self.pool, channels)

    def kink_signature(self, cache):
        return cache[1]


class ReLU(Layer):
    """max(x, 0); derivative 0 at exactly 0."""

    kind = LayerKind.RELU

    def forward(self, x):
        mask = x > 0
        return np.where(mask, x, np.zeros((), dtype=x.dtype)), mask

    def backward(self, cache, grad_out):
        return grad_out * cache, {}

    def output_shape(self, input_shape: tuple) -> tuple:
        return tuple(input_shape)

    def kink_signature(self, cache):
        return cache


class Softmax(Layer):
    """Probability vector over the last axis."""

    kind = LayerKind.SOFTMAX

    def forward(self, x):
        p = softmax(x)
        return p, p

    def backward(self, cache, grad_out):
        p = cache
        return p * (grad_out - (grad_out * p).sum(axis=-1, keepdims=True)), {}

    def output_shape(self, input_shape: tuple) -> tuple:
        return tuple(input_shape)


class Reshape(Layer):
    """Reshape each sample to `target` (batch axis untouched)."""

    kind = LayerKind.RESHAPE

    def __init__(self, name: str, target: Sequence[int]):
        super().__init__(name)
        self.target = tuple(target)

    def forward(self, x):
        if math.prod(x.shape[1:]) != math.prod(self.target):
            raise StructuralError(f"reshape '{self.name}'", self.target, x.shape[1:])
        return x.reshape((x.shape[0],) + self.target), x.shape

    def backward(self, cache, grad_out):
        return grad_out.reshape(cache), {}

    def output_shape(self, input_shape: tuple) -> tuple:
        if math.prod(input_shape) != math.prod(self.target):
            raise StructuralError(f"reshape '{self.name}'", self.target, input_shape)
        return self.target


class Flatten(Layer):
    kind = LayerKind.FLATTEN

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, grad_out):
        return grad_out.reshape(cache), {}

    def output_shape(self, input_shape: tuple) -> tuple:
        return (math.prod(input_shape),)


class Concatenate(Layer):
    """
    Joins several (B, width_i) inputs along the feature axis.

    Takes a sequence of tensors and returns a list of gradients in backward.
    """

    kind = LayerKind.CONCATENATE

    def forward(self, xs: Sequence[Tensor]):
        widths = [x.shape[-1] for x in xs]
        return np.concatenate(list(xs), axis=-1), widths

    def backward(self, cache, grad_out):
        splits = np.cumsum(cache)[:-1]
        return np.split(grad_out, splits, axis=-1), {}

    def output_shape(self, input_shape: tuple) -> tuple:
        # input_shape: sequence of per-sample shapes
        return (sum(shape[-1] for shape in input_shape),)


class NormalizeComplex(Layer):
    """
    Projects each complex pair (a, b) of a 2n-real vector into the unit disk.

    Pairs with magnitude r > 1 are scaled by 1/r, pairs inside the disk pass
    unchanged. On the circle itself (r == 1) the scaling branch is used.
    """

    kind = LayerKind.NORMALIZE_COMPLEX

    def forward(self, x):
        pairs = x.reshape(x.shape[0], -1, 2)
        r = np.sqrt((pairs * pairs).sum(axis=-1, keepdims=True))
        outside = r >= 1
        scale = np.where(outside, 1 / np.maximum(r, 1), np.ones((), dtype=x.dtype))
        y = (pairs * scale).reshape(x.shape)
        return y, (pairs, r, outside, x.shape)

    def backward(self, cache, grad_out):
        pairs, r, outside, shape = cache
        g = grad_out.reshape(pairs.shape)
        safe_r = np.maximum(r, 1)
        u = pairs / safe_r
        projected = (g - u * (u * g).sum(axis=-1, keepdims=True)) / safe_r
        grad = np.where(outside, projected, g)
        return grad.reshape(shape), {}

    def output_shape(self, input_shape: tuple) -> tuple:
        if input_shape[-1] % 2:
            raise StructuralError(f"normalize '{self.name}'", "even width", input_shape[-1])
        return tuple(input_shape)

    def kink_signature(self, cache):
        return cache[2]


class RealComplexMarshal(Layer):
    """
    Packs interleaved reals (re0, im0, re1, im1, ...) into complex samples
    ("real2complex") or unpacks complex samples into interleaved reals
    ("complex2real").
    """

    kind = LayerKind.REAL_COMPLEX_MARSHAL
    DIRECTIONS = ("real2complex", "complex2real")

    def __init__(self, name: str, direction: str):
        super().__init__(name)
        if direction not in self.DIRECTIONS:
            raise InputDomainError("direction", direction, str(self.DIRECTIONS))
        self.direction = direction

    def forward(self, x):
        if self.direction == "real2complex":
            if x.shape[-1] % 2:
                raise StructuralError(f"{self.name}", "even width", x.shape[-1])
            z = x[..., 0::2] + 1j * x[..., 1::2]
            return z.astype(complex_dtype_for(x.dtype)), None
        out = np.empty(x.shape[:-1] + (2 * x.shape[-1],), dtype=real_dtype_for(x.dtype))
        out[..., 0::2] = x.real
        out[..., 1::2] = x.imag
        return out, None

    def backward(self, cache, grad_out):
        if self.direction == "real2complex":
            grad = np.empty(grad_out.shape[:-1] + (2 * grad_out.shape[-1],),
                            dtype=real_dtype_for(grad_out.dtype))
            grad[..., 0::2] = grad_out.real
            grad[..., 1::2] = grad_out.imag
            return grad, {}
        z = grad_out[..., 0::2] + 1j * grad_out[..., 1::2]
        return z.astype(complex_dtype_for(grad_out.dtype)), {}

    def output_shape(self, input_shape: tuple) -> tuple:
        width = input_shape[-1]
        return (width // 2,) if self.direction == "real2complex" else (2 * width,)
