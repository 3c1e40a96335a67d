"""
Channel Models
==============

Training channel
----------------
Per frame of five encoded segments (data, pilot, data, pilot, data) the
channel draws a phase phi ~ U[0, 2pi), an attenuation a ~ U[a_min, 1] and
a window offset m ~ U{-n+1, ..., n}, then computes

    y = a * e^{-j phi} * frame + noise        (noise ~ CN(0, N_0))
    window = y[n + m : n + m + W]             (W = 3n - 1)

N_0 = 10^(-Es/N0 dB / 10) relative to unit sample energy. The pass is
differentiable with respect to the frame samples with the draws held fixed.

Stream channel
--------------
Sample-level impairments for continuous IQ streams: periodic single-sample
slips from clock drift, a per-sample phase random walk, fixed or walking
attenuation and AWGN.

Randomness
----------
All draws come from :class:`RngStream`, a seeded PCG64 generator that can
spawn independent children by index. The same seed always reproduces the
same draws.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from core.layers import Tensor, complex_dtype_for
from core.modem import PILOT_SYMBOL, Encoder
from exceptions import InputDomainError, StructuralError
from models import ChannelParams, StreamChannelParams


logger = logging.getLogger(__name__)


# =============================================================================
# Random streams
# =============================================================================

@dataclass
class RngStream:
    """
    Deterministic random stream.

    `child(i)` derives an independent stream from this one without
    consuming any of its draws, so a Monte Carlo chunk or a training step
    can own its randomness regardless of which worker runs it.
    """
    seed: int
    spawn_key: tuple[int, ...] = ()
    _generator: Optional[np.random.Generator] = field(default=None, init=False, repr=False, compare=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            sequence = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
            self._generator = np.random.Generator(np.random.PCG64(sequence))
        return self._generator

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.spawn_key + (int(index),))


RandomSource = Union[RngStream, np.random.Generator]


def _generator(rng: RandomSource) -> np.random.Generator:
    return rng.generator if isinstance(rng, RngStream) else rng


# =============================================================================
# SNR bookkeeping
# =============================================================================

def noise_variance(es_n0_db: float) -> float:
    """N_0 relative to unit sample energy."""
    return 10.0 ** (-es_n0_db / 10.0)


def es_to_eb(es_n0_db: float, k: int, n: int) -> float:
    """E_sample/N_0 -> E_b/N_0 (dB): each symbol spends n samples on k bits."""
    if k <= 0 or n <= 0:
        raise InputDomainError("k, n", (k, n), "positive integers")
    return es_n0_db + 10.0 * math.log10(n / k)


def eb_to_es(eb_n0_db: float, k: int, n: int) -> float:
    if k <= 0 or n <= 0:
        raise InputDomainError("k, n", (k, n), "positive integers")
    return eb_n0_db - 10.0 * math.log10(n / k)


# =============================================================================
# Elementary impairments
# =============================================================================

def phase_rotate(x: Tensor, phi) -> Tensor:
    """Multiply every sample by e^{-j phi}. A vector phi rotates each row of x."""
    x = np.asarray(x)
    phi = np.asarray(phi, dtype=np.float64)
    rotation = np.exp(-1j * phi)
    if rotation.ndim == 1 and x.ndim == 2:
        rotation = rotation[:, None]
    return (x * rotation).astype(complex_dtype_for(x.real.dtype))


def attenuate(x: Tensor, a, a_min: float = 0.0) -> Tensor:
    """Scale by a (scalar or one factor per row), a_min <= a <= 1 and a > 0."""
    x = np.asarray(x)
    a_arr = np.asarray(a, dtype=np.float64)
    if a_arr.size:
        low, high = float(a_arr.min()), float(a_arr.max())
        if low <= 0.0 or low < a_min:
            raise InputDomainError("attenuation", low, f"[{a_min}, 1], a > 0")
        if high > 1.0:
            raise InputDomainError("attenuation", high, f"[{a_min}, 1], a > 0")
    if a_arr.ndim == 1 and x.ndim == 2:
        a_arr = a_arr[:, None]
    return (x * a_arr).astype(x.dtype)


def draw_noise(shape: tuple, es_n0_db: float, rng: RandomSource, dtype=np.complex64) -> Tensor:
    """Complex Gaussian noise, variance N_0 split N_0/2 per real component."""
    gen = _generator(rng)
    sigma = math.sqrt(noise_variance(es_n0_db) / 2.0)
    noise = gen.normal(0.0, sigma, size=shape + (2,))
    return (noise[..., 0] + 1j * noise[..., 1]).astype(dtype)


def add_awgn(x: Tensor, es_n0_db: Optional[float], rng: RandomSource) -> Tensor:
    """y = x + r; es_n0_db None or +inf leaves x unchanged."""
    x = np.asarray(x)
    if es_n0_db is None or (math.isinf(es_n0_db) and es_n0_db > 0):
        return x.copy()
    return x + draw_noise(x.shape, es_n0_db, rng, dtype=x.dtype)


def _check_offset(m, n: int) -> None:
    lo, hi = ChannelParams.offset_range(n)
    m_arr = np.asarray(m)
    if m_arr.size and (m_arr.min() < lo or m_arr.max() > hi):
        bad = int(m_arr.min()) if m_arr.min() < lo else int(m_arr.max())
        raise InputDomainError("offset m", bad, f"[{lo}, {hi}]")


def _frame_n(frame_length: int) -> int:
    if frame_length % 5 or frame_length == 0:
        raise StructuralError("training frame length", "multiple of 5", frame_length)
    return frame_length // 5


def extract_window(frame: Tensor, m: int) -> Tensor:
    """
    Samples [n + m, n + m + W) of a 5n-sample frame.

    For every admissible m the window fully contains the middle data
    symbol [2n, 3n).
    """
    frame = np.asarray(frame)
    n = _frame_n(frame.shape[-1])
    _check_offset(m, n)
    start = n + int(m)
    return frame[..., start:start + 3 * n - 1]


# =============================================================================
# Training frames
# =============================================================================

@dataclass
class TrainingFrame:
    """
    Encoded frames (prev data, pilot, data, pilot, next data).

    Batched frames keep the encoder cache so the channel gradient can be
    pushed back through the single shared encoder.
    """
    samples: Tensor
    labels: np.ndarray
    symbols: Optional[np.ndarray] = None
    encoder_cache: Optional[list] = None


def assemble_training_frames(encoder: Encoder, triples, pilot: int = PILOT_SYMBOL) -> TrainingFrame:
    """
    Batched frame assembly from (B, 3) symbol triples (s_prev, s_cur, s_next).

    The encoder runs once over all 3B data symbols plus one pilot, so both
    pilot segments of every frame are the same encoded samples.
    """
    triples = np.asarray(triples, dtype=np.int64)
    if triples.ndim != 2 or triples.shape[1] != 3:
        raise StructuralError("symbol triples", "(B, 3)", triples.shape)
    B = triples.shape[0]
    symbols = np.concatenate([triples[:, 0], triples[:, 1], triples[:, 2], [pilot]])
    encoded, cache = encoder.forward(symbols)
    prev, cur, nxt = encoded[:B], encoded[B:2 * B], encoded[2 * B:3 * B]
    pilot_samples = np.broadcast_to(encoded[3 * B], prev.shape)
    samples = np.concatenate([prev, pilot_samples, cur, pilot_samples, nxt], axis=1)
    return TrainingFrame(samples=samples, labels=triples[:, 1].copy(), symbols=symbols, encoder_cache=cache)


def assemble_training_frame(
    encoder: Encoder,
    s_prev: int,
    s_cur: int,
    s_next: int,
    pilot: int = PILOT_SYMBOL,
) -> TrainingFrame:
    """Single 5n-sample frame labelled with the middle data symbol."""
    batch = assemble_training_frames(encoder, [[s_prev, s_cur, s_next]], pilot)
    return TrainingFrame(samples=batch.samples[0], labels=batch.labels)


def frame_gradient_to_encoded(grad_frames: Tensor, n: int) -> Tensor:
    """
    Fold a (B, 5n) frame gradient onto the (3B + 1, n) encoder outputs.

    Both pilot segments of every frame accumulate into the single pilot row.
    """
    B = grad_frames.shape[0]
    segments = grad_frames.reshape(B, 5, n)
    pilot = (segments[:, 1] + segments[:, 3]).sum(axis=0, keepdims=True)
    return np.concatenate([segments[:, 0], segments[:, 2], segments[:, 4], pilot], axis=0)


def backward_training_frames(encoder: Encoder, frame: TrainingFrame, grad_frames: Tensor) -> dict[str, Tensor]:
    n = encoder.config.n
    grad_encoded = frame_gradient_to_encoded(grad_frames, n)
    return encoder.backward(frame.encoder_cache, grad_encoded.astype(frame.samples.dtype))


# =============================================================================
# Training channel pass
# =============================================================================

@dataclass
class ChannelDraws:
    """Per-frame draws of one channel pass (noise None when disabled)."""
    phase: np.ndarray
    attenuation: np.ndarray
    offset: np.ndarray
    noise: Optional[Tensor] = None


def draw_channel(params: ChannelParams, n: int, batch: int, rng: RandomSource, dtype=np.complex64) -> ChannelDraws:
    gen = _generator(rng)
    lo, hi = ChannelParams.offset_range(n)

    if params.fixed_phase is not None:
        phase = np.full(batch, params.fixed_phase)
    else:
        phase = gen.uniform(0.0, params.phase_max, size=batch)

    if params.fixed_attenuation is not None:
        attenuation = np.full(batch, params.fixed_attenuation)
    else:
        attenuation = gen.uniform(params.a_min, 1.0, size=batch)

    if params.fixed_offset is not None:
        _check_offset(params.fixed_offset, n)
        offset = np.full(batch, params.fixed_offset, dtype=np.int64)
    else:
        offset = gen.integers(lo, hi + 1, size=batch)

    noise = None
    if params.noise_enabled:
        noise = draw_noise((batch, 5 * n), params.es_n0_db, gen, dtype=dtype)
    return ChannelDraws(phase=phase, attenuation=attenuation, offset=offset, noise=noise)


def _gather_windows(frames: Tensor, offset: np.ndarray, n: int) -> Tensor:
    W = 3 * n - 1
    index = (n + offset)[:, None] + np.arange(W)[None, :]
    return np.take_along_axis(frames, index, axis=1)


def apply_channel(frames: Tensor, draws: ChannelDraws) -> Tensor:
    """Deterministic part of the pass: rotate, attenuate, add the drawn noise, cut windows."""
    n = _frame_n(frames.shape[1])
    _check_offset(draws.offset, n)
    y = attenuate(phase_rotate(frames, draws.phase), draws.attenuation)
    if draws.noise is not None:
        y = y + draws.noise.astype(y.dtype)
    return _gather_windows(y, draws.offset, n)


def channel_backward(grad_windows: Tensor, draws: ChannelDraws, frame_length: int) -> Tensor:
    """
    Gradient w.r.t. the frame samples (draws fixed).

    The window cut scatters back into the frame; the complex scale
    c = a e^{-j phi} contributes conj(c).
    """
    n = _frame_n(frame_length)
    B, W = grad_windows.shape
    grad_frames = np.zeros((B, frame_length), dtype=grad_windows.dtype)
    index = (n + draws.offset)[:, None] + np.arange(W)[None, :]
    np.put_along_axis(grad_frames, index, grad_windows, axis=1)
    scale = (draws.attenuation * np.exp(1j * draws.phase))[:, None]
    return (grad_frames * scale).astype(grad_windows.dtype)


def channel_pass(
    frame: Tensor,
    params: ChannelParams,
    rng: RandomSource,
    draws: Optional[ChannelDraws] = None,
) -> tuple[Tensor, ChannelDraws]:
    """
    Impair one frame (5n,) or a batch (B, 5n) and cut the receiver window(s).

    Returns:
        (window(s), draws) where draws hold phi, a, m (and the noise) per frame
    """
    frame = np.asarray(frame)
    single = frame.ndim == 1
    frames = frame[None] if single else frame
    n = _frame_n(frames.shape[1])
    if draws is None:
        draws = draw_channel(params, n, frames.shape[0], rng, dtype=frames.dtype)
    windows = apply_channel(frames, draws)
    return (windows[0] if single else windows), draws


# =============================================================================
# Stream channel
# =============================================================================

def slip_positions(length: int, params: StreamChannelParams) -> np.ndarray:
    """Indices of the samples deleted (drift > 0) or duplicated (drift < 0)."""
    period = params.slip_period
    if period is None:
        return np.zeros(0, dtype=np.int64)
    return np.arange(period - 1, length, period, dtype=np.int64)


def apply_drift(iq: Tensor, params: StreamChannelParams) -> tuple[Tensor, int]:
    """
    Realize clock drift as single-sample slips, one per slip period.

    Returns the slipped stream and the number of slips.
    """
    positions = slip_positions(len(iq), params)
    if positions.size == 0:
        return iq.copy(), 0
    if params.drift_ppm > 0:
        out = np.delete(iq, positions)
    else:
        out = np.insert(iq, positions + 1, iq[positions])
    return out, int(positions.size)


def stream_channel(iq: Tensor, params: StreamChannelParams, rng: RandomSource) -> Tensor:
    """
    Impair a continuous IQ stream.

    Order: drift slips, phase random walk, attenuation (fixed or walking,
    clipped to [a_min, 1]), AWGN.
    """
    gen = _generator(rng)
    iq = np.asarray(iq, dtype=np.complex64)
    out, slips = apply_drift(iq, params)
    if slips:
        logger.debug(f"Stream channel applied {slips} slips (period {params.slip_period})")
    length = len(out)

    phase = np.full(length, params.initial_phase, dtype=np.float64)
    if params.phase_walk_step > 0 and length:
        phase = params.initial_phase + np.cumsum(gen.normal(0.0, params.phase_walk_step, size=length))
        phase = np.mod(phase, 2 * math.pi)
    if np.any(phase != 0):
        out = (out * np.exp(-1j * phase)).astype(np.complex64)

    if params.attenuation_walk > 0 and length:
        gain = params.attenuation + np.cumsum(gen.normal(0.0, params.attenuation_walk, size=length))
        gain = np.clip(gain, params.a_min, 1.0)
        out = (out * gain).astype(np.complex64)
    elif params.attenuation != 1.0:
        out = attenuate(out, params.attenuation)

    return add_awgn(out, params.es_n0_db, gen)


def expected_stream_length(length: int, params: StreamChannelParams) -> int:
    slips = len(slip_positions(length, params))
    return length - slips if params.drift_ppm > 0 else length + slips


def window_offsets(n: int) -> Sequence[int]:
    lo, hi = ChannelParams.offset_range(n)
    return range(lo, hi + 1)
