"""
Finite-Difference Gradient Verification
=======================================

Checks every backward rule against central differences:

    df/dx_i ~ (f(x + eps e_i) - f(x - eps e_i)) / 2 eps

Single layers are checked in float32 on small random instances with the
scalar objective f = sum(out * r) for a random projection r, so the
analytic gradient is simply ``backward(cache, r)``. The channel pass is
checked the same way with its draws held fixed. The full
encoder -> channel -> decoder network is checked in float64 on sampled
parameter coordinates with the mean cross entropy as objective.

A coordinate is excluded when perturbing it by +-eps changes a kink
signature (ReLU masks, max-pool argmax, unit-disk branch): there the
function is not differentiable over the probe interval.

Each check reports the max-norm relative error

    max_i |num_i - ana_i| / max(max_i |num_i|, max_i |ana_i|, floor)

per variable (per instance for the composite network, whose tensors
have very different gradient scales) and fails above the tolerance
(default 1e-2).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from core.channel import (
    RngStream,
    apply_channel,
    assemble_training_frames,
    backward_training_frames,
    channel_backward,
    draw_channel,
)
from core.layers import (
    Concatenate,
    Conv1D,
    Dense,
    Embedding,
    Flatten,
    Layer,
    LayerKind,
    MaxPool1D,
    NormalizeComplex,
    RealComplexMarshal,
    ReLU,
    Reshape,
    Softmax,
)
from core.modem import Autoencoder
from core.network import mean_cross_entropy, softmax_cross_entropy_grad
from exceptions import VerificationFailedError
from models import ChannelParams, GradCheckResult, ModelConfig


logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-3
DEFAULT_TOLERANCE = 1e-2
DEFAULT_INSTANCES = 20
COORDS_PER_VARIABLE = 24
COMPOSITE_COORDS = 40

SCALE_FLOOR = {np.dtype(np.float32): 1e-4, np.dtype(np.float64): 1e-8}

Probe = Callable[[], tuple[float, list]]
LayerCase = Callable[[np.random.Generator], tuple[Layer, object]]


def finite_diff_gradient(
    f: Callable[[], float],
    x: np.ndarray,
    eps: float = DEFAULT_EPS,
    coords: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """
    Central-difference gradient of f() with respect to the entries of x.

    x is perturbed in place (and restored), so f must read it by reference.
    Returns the full gradient shaped like x, or one value per flat index
    in `coords`.
    """
    flat = x.reshape(-1)
    indices = range(flat.size) if coords is None else coords
    out = np.empty(len(indices), dtype=np.float64)
    for position, index in enumerate(indices):
        original = flat[index]
        flat[index] = original + eps
        plus_step = flat[index]
        f_plus = f()
        flat[index] = original - eps
        minus_step = flat[index]
        f_minus = f()
        flat[index] = original
        out[position] = (f_plus - f_minus) / float(plus_step - minus_step)
    return out.reshape(x.shape) if coords is None else out


def _signatures_equal(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(p, q) for p, q in zip(a, b))


@dataclass
class VariableCheck:
    checked: int
    excluded: int
    max_rel_error: float
    numeric: Optional[np.ndarray] = None
    analytic: Optional[np.ndarray] = None
    floor: float = 1e-8


def check_variable(
    probe: Probe,
    x: np.ndarray,
    analytic: np.ndarray,
    coords: Iterable[int],
    eps: float,
) -> VariableCheck:
    """
    Compare `analytic` (shaped like x) with central differences at `coords`,
    skipping coordinates whose probes cross a kink.
    """
    flat = x.reshape(-1)
    grad = np.asarray(analytic, dtype=np.float64).reshape(-1)
    _, base_signature = probe()
    numeric, expected, excluded = [], [], 0
    for index in coords:
        original = flat[index]
        flat[index] = original + eps
        plus_step = flat[index]
        f_plus, sig_plus = probe()
        flat[index] = original - eps
        minus_step = flat[index]
        f_minus, sig_minus = probe()
        flat[index] = original
        if not (_signatures_equal(sig_plus, base_signature) and _signatures_equal(sig_minus, base_signature)):
            excluded += 1
            continue
        numeric.append((f_plus - f_minus) / float(plus_step - minus_step))
        expected.append(grad[index])

    floor = SCALE_FLOOR.get(x.dtype, 1e-8)
    numeric = np.asarray(numeric, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    return VariableCheck(
        checked=len(numeric),
        excluded=excluded,
        max_rel_error=max_relative_error(numeric, expected, floor),
        numeric=numeric,
        analytic=expected,
        floor=floor,
    )


def max_relative_error(numeric: np.ndarray, analytic: np.ndarray, floor: float = 1e-8) -> float:
    if numeric.size == 0:
        return 0.0
    scale = max(np.abs(numeric).max(), np.abs(analytic).max(), floor)
    return float(np.abs(numeric - analytic).max() / scale)


def pool_checks(checks: Sequence[VariableCheck]) -> VariableCheck:
    """Merge checks of one instance so the error is scaled by the largest gradient of all of them."""
    numeric = np.concatenate([c.numeric for c in checks if c.numeric is not None] or [np.zeros(0)])
    analytic = np.concatenate([c.analytic for c in checks if c.analytic is not None] or [np.zeros(0)])
    floor = max((c.floor for c in checks), default=1e-8)
    return VariableCheck(
        checked=sum(c.checked for c in checks),
        excluded=sum(c.excluded for c in checks),
        max_rel_error=max_relative_error(numeric, analytic, floor),
        numeric=numeric,
        analytic=analytic,
        floor=floor,
    )


def _sample_coords(rng: np.random.Generator, size: int, limit: int) -> np.ndarray:
    if size <= limit:
        return np.arange(size)
    return np.sort(rng.choice(size, size=limit, replace=False))


# =============================================================================
# Single layers
# =============================================================================

def _real_view(x: np.ndarray) -> np.ndarray:
    """Writable real view of a contiguous real or complex array."""
    if np.iscomplexobj(x):
        return x.view(x.real.dtype)
    return x


def _randn(rng: np.random.Generator, shape, scale: float = 1.0, dtype=np.float32) -> np.ndarray:
    return (rng.normal(0.0, scale, size=shape)).astype(dtype)


def _randomize(layer: Layer, rng: np.random.Generator) -> Layer:
    for key, value in layer.params.items():
        layer.params[key] = _randn(rng, value.shape, 0.5)
    return layer


def _case_embedding(rng):
    M, d, B = rng.integers(4, 17), rng.integers(3, 9), rng.integers(2, 6)
    return _randomize(Embedding("embedding", M, d), rng), rng.integers(0, M, size=B)


def _case_dense(rng):
    fan_in, fan_out, B = rng.integers(3, 11), rng.integers(2, 9), rng.integers(2, 5)
    return _randomize(Dense("dense", fan_in, fan_out), rng), _randn(rng, (B, fan_in))


def _case_conv1d(rng):
    c_in, c_out, k_len = rng.integers(1, 4), rng.integers(2, 5), rng.integers(2, 6)
    length = k_len + rng.integers(0, 7)
    layer = _randomize(Conv1D("conv1d", c_in, c_out, k_len), rng)
    return layer, _randn(rng, (rng.integers(1, 4), length, c_in))


def _case_maxpool(rng):
    pool = rng.integers(1, 4)
    length = pool * rng.integers(2, 5) + rng.integers(0, pool)
    return MaxPool1D("maxpool1d", pool), _randn(rng, (rng.integers(1, 4), length, rng.integers(1, 4)))


def _case_relu(rng):
    return ReLU("relu"), _randn(rng, (rng.integers(2, 5), rng.integers(3, 12)))


def _case_softmax(rng):
    return Softmax("softmax"), _randn(rng, (rng.integers(2, 5), rng.integers(2, 9)))


def _case_reshape(rng):
    rows, cols = rng.integers(2, 5), rng.integers(2, 5)
    return Reshape("reshape", (rows, cols)), _randn(rng, (rng.integers(1, 4), rows * cols))


def _case_flatten(rng):
    return Flatten("flatten"), _randn(rng, (rng.integers(1, 4), rng.integers(2, 5), rng.integers(2, 5)))


def _case_concatenate(rng):
    B = rng.integers(1, 4)
    parts = [_randn(rng, (B, rng.integers(1, 7))) for _ in range(rng.integers(2, 4))]
    return Concatenate("concatenate"), parts


def _case_normalize(rng):
    B, pairs = rng.integers(1, 4), rng.integers(2, 9)
    return NormalizeComplex("normalize"), _randn(rng, (B, 2 * pairs), scale=1.2)


def _case_marshal(rng):
    B, width = rng.integers(1, 4), rng.integers(2, 9)
    if rng.integers(0, 2):
        return RealComplexMarshal("real2complex", "real2complex"), _randn(rng, (B, 2 * width))
    x = (_randn(rng, (B, width)) + 1j * _randn(rng, (B, width))).astype(np.complex64)
    return RealComplexMarshal("complex2real", "complex2real"), x


LAYER_CASES: dict[str, LayerCase] = {
    LayerKind.EMBEDDING.value: _case_embedding,
    LayerKind.DENSE.value: _case_dense,
    LayerKind.CONV1D.value: _case_conv1d,
    LayerKind.MAXPOOL1D.value: _case_maxpool,
    LayerKind.RELU.value: _case_relu,
    LayerKind.SOFTMAX.value: _case_softmax,
    LayerKind.RESHAPE.value: _case_reshape,
    LayerKind.FLATTEN.value: _case_flatten,
    LayerKind.CONCATENATE.value: _case_concatenate,
    LayerKind.NORMALIZE_COMPLEX.value: _case_normalize,
    LayerKind.REAL_COMPLEX_MARSHAL.value: _case_marshal,
}


def _projection_loss(out: np.ndarray, r: np.ndarray) -> float:
    return float((_real_view(np.ascontiguousarray(out)).astype(np.float64) * r).sum())


def check_layer_instance(
    layer: Layer,
    x,
    rng: np.random.Generator,
    eps: float = DEFAULT_EPS,
) -> list[VariableCheck]:
    """Check parameter and input gradients of one layer on one input."""
    out, cache = layer.forward(x)
    out_real = _real_view(np.ascontiguousarray(out))
    r = _randn(rng, out_real.shape, dtype=out_real.dtype)
    grad_out = r.view(out.dtype) if np.iscomplexobj(out) else r
    grad_in, param_grads = layer.backward(cache, grad_out)
    r64 = r.astype(np.float64)

    def probe():
        value, probe_cache = layer.forward(x)
        signature = layer.kink_signature(probe_cache)
        return _projection_loss(value, r64), [] if signature is None else [signature]

    variables: list[tuple[np.ndarray, np.ndarray]] = [
        (layer.params[name], param_grads[name]) for name in layer.params
    ]
    if isinstance(x, (list, tuple)):
        variables += [(xi, gi) for xi, gi in zip(x, grad_in)]
    elif grad_in is not None:
        variables.append((_real_view(x), _real_view(np.ascontiguousarray(grad_in))))

    checks = []
    for value, analytic in variables:
        coords = _sample_coords(rng, value.size, COORDS_PER_VARIABLE)
        checks.append(check_variable(probe, value, analytic, coords, eps))
    return checks


def _summarize(layer: str, kind: str, instances: int, checks: list[VariableCheck], tolerance: float) -> GradCheckResult:
    worst = max((c.max_rel_error for c in checks), default=0.0)
    return GradCheckResult(
        layer=layer,
        kind=kind,
        instances=instances,
        checked=sum(c.checked for c in checks),
        excluded=sum(c.excluded for c in checks),
        max_rel_error=worst,
        passed=worst < tolerance,
    )


def check_layer_kind(
    kind: str,
    rng: np.random.Generator,
    instances: int = DEFAULT_INSTANCES,
    eps: float = DEFAULT_EPS,
    tolerance: float = DEFAULT_TOLERANCE,
    case: Optional[LayerCase] = None,
) -> GradCheckResult:
    """Run `instances` random instances of one layer kind."""
    make = case or LAYER_CASES[kind]
    checks: list[VariableCheck] = []
    name = kind
    for _ in range(instances):
        layer, x = make(rng)
        name = layer.name
        checks += check_layer_instance(layer, x, rng, eps)
    result = _summarize(name, kind, instances, checks, tolerance)
    logger.debug(f"gradcheck {kind}: max rel error {result.max_rel_error:.2e}")
    return result


# =============================================================================
# Channel pass and the composite network
# =============================================================================

def check_channel(
    rng: np.random.Generator,
    instances: int = DEFAULT_INSTANCES,
    eps: float = DEFAULT_EPS,
    tolerance: float = DEFAULT_TOLERANCE,
) -> GradCheckResult:
    """Gradient of the channel pass w.r.t. the frame samples, draws fixed."""
    checks: list[VariableCheck] = []
    for _ in range(instances):
        n, B = int(rng.integers(2, 9)), int(rng.integers(1, 4))
        frames = (_randn(rng, (B, 5 * n)) + 1j * _randn(rng, (B, 5 * n))).astype(np.complex64)
        draws = draw_channel(ChannelParams(es_n0_db=5.0), n, B, rng, dtype=np.complex64)
        windows = apply_channel(frames, draws)
        r = _randn(rng, _real_view(np.ascontiguousarray(windows)).shape)
        grad_frames = channel_backward(r.view(np.complex64), draws, 5 * n)
        r64 = r.astype(np.float64)

        def probe(frames=frames, draws=draws, r64=r64):
            return _projection_loss(apply_channel(frames, draws), r64), []

        coords = _sample_coords(rng, 2 * frames.size, COORDS_PER_VARIABLE)
        checks.append(check_variable(probe, _real_view(frames), _real_view(grad_frames), coords, eps))
    return _summarize("channel_pass", "channel", instances, checks, tolerance)


def check_composite(
    config: ModelConfig,
    rng: np.random.Generator,
    instances: int = DEFAULT_INSTANCES,
    eps: float = DEFAULT_EPS,
    tolerance: float = DEFAULT_TOLERANCE,
    batch_size: int = 4,
) -> GradCheckResult:
    """
    End-to-end check of encoder -> channel -> decoder in float64.

    Each instance is a fresh model with its own batch and channel draws;
    COMPOSITE_COORDS parameter coordinates are sampled across all tensors.
    """
    checks: list[VariableCheck] = []
    for _ in range(instances):
        model = Autoencoder.create(config, rng).astype(np.float64)
        triples = rng.integers(0, config.M, size=(batch_size, 3))
        draws = draw_channel(ChannelParams(es_n0_db=5.0), config.n, batch_size, rng, dtype=np.complex128)

        frame = assemble_training_frames(model.encoder, triples)
        windows = apply_channel(frame.samples, draws)
        probs, cache = model.decoder.forward(windows)
        grad_windows, grads = model.decoder.backward(cache, softmax_cross_entropy_grad(probs, frame.labels))
        grad_frames = channel_backward(grad_windows, draws, frame.samples.shape[1])
        grads.update(backward_training_frames(model.encoder, frame, grad_frames))

        def probe(model=model, triples=triples, draws=draws):
            f = assemble_training_frames(model.encoder, triples)
            p, c = model.decoder.forward(apply_channel(f.samples, draws))
            loss, _ = mean_cross_entropy(p, f.labels)
            signature = model.encoder.network.kink_signature(f.encoder_cache) + model.decoder.kink_signature(c)
            return loss, signature

        params = model.parameters()
        names = list(params)
        picks = rng.choice(len(names), size=COMPOSITE_COORDS)
        instance_checks = []
        for position in np.unique(picks):
            name = names[position]
            count = int((picks == position).sum())
            coords = _sample_coords(rng, params[name].size, count)
            instance_checks.append(check_variable(probe, params[name], grads[name], coords, eps))
        checks.append(pool_checks(instance_checks))
    return _summarize(f"{config.name} composite", "composite", instances, checks, tolerance)


# =============================================================================
# Harness
# =============================================================================

def run_gradcheck(
    config: ModelConfig,
    seed: int = 1,
    instances: int = DEFAULT_INSTANCES,
    eps: float = DEFAULT_EPS,
    tolerance: float = DEFAULT_TOLERANCE,
    kinds: Optional[Sequence[str]] = None,
    cases: Optional[dict[str, LayerCase]] = None,
    include_composite: bool = True,
) -> list[GradCheckResult]:
    """
    Check every layer kind, the channel pass and (optionally) the composite
    network. `cases` replaces the instance factory of individual kinds.
    """
    root = RngStream(seed)
    overrides = cases or {}
    results = []
    for index, kind in enumerate(kinds or list(LAYER_CASES)):
        results.append(check_layer_kind(
            kind, root.child(index).generator, instances, eps, tolerance, case=overrides.get(kind)
        ))
    results.append(check_channel(root.child(len(LAYER_CASES)).generator, instances, eps, tolerance))
    if include_composite:
        results.append(check_composite(config, root.child(len(LAYER_CASES) + 1).generator,
                                       instances, eps, tolerance))
    for result in results:
        status = "ok" if result.passed else "FAILED"
        logger.info(f"gradcheck {result.kind:<22} max rel err {result.max_rel_error:.2e}  {status}")
    return results


def verify(results: Sequence[GradCheckResult]) -> None:
    """Raise VerificationFailedError naming every failed layer."""
    failed = [r for r in results if not r.passed]
    if failed:
        raise VerificationFailedError([r.layer for r in failed], max(r.max_rel_error for r in failed))
