"""
Streaming Transmitter and Receiver
==================================

Deployment-style operation over continuous IQ streams:

    tx:  pilot, d1, pilot, d2, ...            (2n samples per data symbol)
    rx:  window of W = 3n - 1 samples at start_offset + 2n * i, decoded
         independently, one symbol per window

There is no re-synchronization: the decoder was trained on every offset
residue, so any start_offset decodes the data stream up to a constant
symbol lag, which :func:`align_sequences` recovers for scoring.

IQ files are raw little-endian complex64 (interleaved float32 I/Q, no
header) with an optional ``.meta`` sidecar of ``key = value`` lines.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
from scipy.signal import find_peaks

from core.modem import Decoder, Encoder
from exceptions import AlignmentError, InputDomainError, StructuralError
from models import ModelConfig, StreamChannelParams, TOOL_VERSION


logger = logging.getLogger(__name__)

IQ_DTYPE = np.dtype("<c8")
META_SUFFIX = ".meta"
DEFAULT_SAMPLE_RATE = 1e6
TRACK_CHUNK_SYMBOLS = 256
MIN_WINDOWS_PER_CYCLE = 4


@dataclass
class IqStream:
    """Complex baseband samples plus their (metadata-only) sample rate."""
    samples: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex64).ravel()
        if not np.isfinite(self.samples).all():
            raise InputDomainError("iq samples", "non-finite", "finite complex values")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


# =============================================================================
# Transmit / receive
# =============================================================================

def tx_stream(encoder: Encoder, symbols: Sequence[int], sample_rate: float = DEFAULT_SAMPLE_RATE) -> IqStream:
    """Pilot-first 1:1 interleave of pilot and data waveforms."""
    cfg = encoder.config
    symbols = np.asarray(symbols, dtype=np.int64)
    metadata = {"model": cfg.name, "symbols": int(symbols.size)}
    if symbols.size == 0:
        return IqStream(np.zeros(0, dtype=np.complex64), sample_rate, metadata)
    data = encoder.encode_batch(symbols)
    pilot = np.broadcast_to(encoder.pilot, data.shape)
    samples = np.stack([pilot, data], axis=1).reshape(-1)
    return IqStream(samples, sample_rate, metadata)


def rx_window_count(length: int, start_offset: int, config: ModelConfig) -> int:
    span = length - start_offset - config.W
    return span // (2 * config.n) + 1 if span >= 0 else 0


def rx_windows(iq: Union[IqStream, np.ndarray], start_offset: int, config: ModelConfig) -> np.ndarray:
    """(count, W) view of the receiver windows."""
    if start_offset < 0:
        raise InputDomainError("start_offset", start_offset, ">= 0")
    samples = iq.samples if isinstance(iq, IqStream) else np.asarray(iq, dtype=np.complex64)
    count = rx_window_count(len(samples), start_offset, config)
    if count == 0:
        return np.zeros((0, config.W), dtype=np.complex64)
    tail = samples[start_offset:]
    return np.lib.stride_tricks.sliding_window_view(tail, config.W)[::2 * config.n][:count]


def rx_stream(
    decoder: Decoder,
    iq: Union[IqStream, np.ndarray],
    start_offset: int,
    batch_size: int = 2048,
) -> np.ndarray:
    """
    Decode one symbol per window at start_offset + 2n * i.

    A stream shorter than one window decodes to an empty array.
    """
    windows = rx_windows(iq, start_offset, decoder.config)
    decoded = np.empty(len(windows), dtype=np.int64)
    for start in range(0, len(windows), batch_size):
        batch = np.ascontiguousarray(windows[start:start + batch_size])
        _, symbols = decoder.decode_batch(batch)
        decoded[start:start + len(batch)] = symbols
    return decoded


# =============================================================================
# Scoring
# =============================================================================

@dataclass
class Alignment:
    lag: int
    ser: float
    matches: int
    overlap: int


def _overlap(sent_len: int, decoded_len: int, lag: int) -> tuple[int, int]:
    """Decoded index range [lo, hi) whose partner sent[i + lag] exists."""
    lo = max(0, -lag)
    hi = min(decoded_len, sent_len - lag)
    return lo, max(lo, hi)


def align_sequences(sent, decoded, max_lag: int) -> Alignment:
    """
    Best lag in [-max_lag, max_lag] comparing decoded[i] with sent[i + lag].

    The lag with the most matching symbols wins; ties go to the smallest
    |lag|, then the negative one.

    Raises:
        AlignmentError: No lag leaves any overlap
    """
    if max_lag < 0:
        raise InputDomainError("max_lag", max_lag, ">= 0")
    sent = np.asarray(sent)
    decoded = np.asarray(decoded)
    best: Optional[Alignment] = None
    for lag in sorted(range(-max_lag, max_lag + 1), key=lambda v: (abs(v), v)):
        lo, hi = _overlap(len(sent), len(decoded), lag)
        if hi == lo:
            continue
        matches = int((decoded[lo:hi] == sent[lo + lag:hi + lag]).sum())
        if best is None or matches > best.matches:
            overlap = hi - lo
            best = Alignment(lag=lag, ser=1.0 - matches / overlap, matches=matches, overlap=overlap)
    if best is None:
        raise AlignmentError(len(sent), len(decoded), max_lag)
    return best


def error_indicators(sent, decoded, lag: int) -> np.ndarray:
    sent = np.asarray(sent)
    decoded = np.asarray(decoded)
    lo, hi = _overlap(len(sent), len(decoded), lag)
    return decoded[lo:hi] != sent[lo + lag:hi + lag]


def windowed_ser(sent, decoded, lag: int, window_symbols: int) -> list[float]:
    """SER per non-overlapping window of aligned symbols; a trailing partial window is dropped."""
    if window_symbols < 1:
        raise InputDomainError("window_symbols", window_symbols, ">= 1")
    errors = error_indicators(sent, decoded, lag)
    full = len(errors) // window_symbols
    if full == 0:
        return []
    return errors[:full * window_symbols].reshape(full, window_symbols).mean(axis=1).tolist()


def _mismatches(piece: np.ndarray, sent: np.ndarray, lo: int) -> Optional[np.ndarray]:
    if lo < 0 or lo + len(piece) > len(sent):
        return None
    return piece != sent[lo:lo + len(piece)]


def _best_split(stay: np.ndarray, moved: np.ndarray) -> np.ndarray:
    """Error flags when the lag switches before the symbol that minimizes the total."""
    before = np.concatenate(([0], np.cumsum(stay)))
    after = np.concatenate((np.cumsum(moved[::-1])[::-1], [0]))
    split = int(np.argmin((before + after)[:-1]))
    return np.concatenate((stay[:split], moved[split:]))


def tracked_windowed_ser(
    sent,
    decoded,
    window_symbols: int,
    initial_lag: int = 0,
    search: int = 2,
    chunk_symbols: Optional[int] = None,
) -> tuple[list[float], list[int]]:
    """
    Windowed SER with the lag followed through the stream.

    Clock slips add or drop a decoded symbol every so often, so the lag is
    re-estimated on chunks of `chunk_symbols` (default: the window, at most
    TRACK_CHUNK_SYMBOLS). Each chunk either keeps the previous lag or moves
    to one within +-search of it, switching at the symbol that minimizes the
    chunk's errors. A switch has to save two or more errors; among equal
    candidates the closest lag wins.
    Tracking stops at the first chunk without full overlap. The lag
    reported for a window is the one in force at its last symbol.
    """
    if window_symbols < 1:
        raise InputDomainError("window_symbols", window_symbols, ">= 1")
    chunk = chunk_symbols or min(window_symbols, TRACK_CHUNK_SYMBOLS)
    if chunk < 1:
        raise InputDomainError("chunk_symbols", chunk, ">= 1")
    sent = np.asarray(sent)
    decoded = np.asarray(decoded)
    flags: list[np.ndarray] = []
    chunk_lags: list[int] = []
    lag = initial_lag
    for start in range(0, len(decoded) - chunk + 1, chunk):
        piece = decoded[start:start + chunk]
        stay = _mismatches(piece, sent, start + lag)
        best_lag, best_flags = (lag, stay) if stay is not None else (None, None)
        best_cost = int(stay.sum()) if stay is not None else None
        candidates = sorted(
            (v for v in range(lag - search, lag + search + 1) if v != lag),
            key=lambda v: (abs(v - lag), v),
        )
        for candidate in candidates:
            moved = _mismatches(piece, sent, start + candidate)
            if moved is None:
                continue
            option = moved if stay is None else _best_split(stay, moved)
            # a switch must save at least two errors
            cost = int(option.sum()) + 1
            if best_cost is None or cost < best_cost:
                best_lag, best_flags, best_cost = candidate, option, cost
        if best_lag is None:
            break
        lag = best_lag
        flags.append(best_flags)
        chunk_lags.append(lag)

    errors = np.concatenate(flags) if flags else np.zeros(0, dtype=bool)
    full = len(errors) // window_symbols
    series = errors[:full * window_symbols].reshape(full, window_symbols).mean(axis=1).tolist()
    lags = [chunk_lags[((w + 1) * window_symbols - 1) // chunk] for w in range(full)]
    return series, lags


def window_symbols_for(window_ms: float, sample_rate: float, config: ModelConfig) -> int:
    """Data symbols per SER window of `window_ms` at 2n samples per data symbol."""
    return max(1, round(window_ms / 1000.0 * sample_rate / (2 * config.n)))


def stream_window_symbols(
    window_ms: float,
    sample_rate: float,
    config: ModelConfig,
    params: StreamChannelParams,
) -> int:
    """
    Default SER window for a stream: `window_ms` of stream time, shortened
    under drift so one residue cycle spans at least MIN_WINDOWS_PER_CYCLE
    windows.
    """
    window = window_symbols_for(window_ms, sample_rate, config)
    period = params.slip_period
    if period is not None:
        window = min(window, max(1, period // MIN_WINDOWS_PER_CYCLE))
    return window


def nominal_bit_rate(config: ModelConfig, sample_rate: float) -> float:
    """k bits per 2n samples: AE-8/8 at 1 MHz carries 0.5 Mbit/s."""
    return config.k * sample_rate / (2 * config.n)


# =============================================================================
# Periodicity of windowed SER
# =============================================================================

def predicted_period_windows(params: StreamChannelParams, window_symbols: int) -> Optional[float]:
    """
    Windows per full cycle of the receiver's offset residue.

    One slip moves the window by one sample; 2n slips (2n * period samples,
    i.e. `period` data symbols) bring it back to the same residue.
    """
    period = params.slip_period
    if period is None:
        return None
    return period / window_symbols


def dominant_period(series: Sequence[float], min_lag: int = 2) -> Optional[int]:
    """Lag (in windows) of the strongest autocorrelation peak, None for flat or short series."""
    values = np.asarray(series, dtype=np.float64)
    if len(values) < 2 * min_lag + 1:
        return None
    centered = values - values.mean()
    energy = float((centered * centered).sum())
    if energy <= 0.0:
        return None
    acf = np.correlate(centered, centered, mode="full")[len(values) - 1:] / energy
    limit = len(values) // 2 + 1
    peaks, _ = find_peaks(acf[:limit])
    peaks = peaks[peaks >= min_lag]
    if peaks.size == 0:
        return None
    return int(peaks[np.argmax(acf[peaks])])


# =============================================================================
# Throughput
# =============================================================================

@dataclass
class Throughput:
    bits_per_second: float
    windows: int
    elapsed: float


def measure_throughput(
    decoder: Decoder,
    iq: Union[IqStream, np.ndarray],
    duration: Optional[float] = None,
    start_offset: int = 0,
    batch_size: int = 2048,
) -> Throughput:
    """
    Wall-clock decoding rate in data bits per second (k bits per window).

    With `duration` the stream is decoded repeatedly until that many
    seconds have passed; otherwise once.
    """
    k = decoder.config.k
    windows = 0
    begin = time.perf_counter()
    while True:
        windows += len(rx_stream(decoder, iq, start_offset, batch_size))
        elapsed = time.perf_counter() - begin
        if duration is None or elapsed >= duration or windows == 0:
            break
    elapsed = max(elapsed, 1e-9)
    return Throughput(bits_per_second=k * windows / elapsed, windows=windows, elapsed=elapsed)


# =============================================================================
# IQ files
# =============================================================================

def meta_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + META_SUFFIX)


def write_iq(path: Union[str, Path], stream: IqStream, **extra) -> Path:
    """Write raw complex64 samples and the key = value sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stream.samples.astype(IQ_DTYPE).tofile(path)

    meta = {
        "format": "cf32_le",
        "sample_rate": stream.sample_rate,
        "num_samples": len(stream),
        "tool_version": TOOL_VERSION,
    }
    meta.update(stream.metadata)
    meta.update(extra)
    lines = ["# ae-modem IQ recording"] + [f"{key} = {value}" for key, value in meta.items()]
    meta_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote {len(stream)} samples to {path}")
    return path


def _parse_value(text: str) -> Any:
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_meta(path: Union[str, Path]) -> dict[str, Any]:
    sidecar = meta_path(path)
    if not sidecar.exists():
        return {}
    meta: dict[str, Any] = {}
    for number, line in enumerate(sidecar.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise StructuralError(f"{sidecar}:{number}", "key = value", line)
        key, value = line.split("=", 1)
        meta[key.strip()] = _parse_value(value.strip())
    return meta


def read_iq(path: Union[str, Path], sample_rate: Optional[float] = None) -> IqStream:
    """Load a complex64 recording; the sidecar's sample_rate wins unless one is given."""
    path = Path(path)
    size = path.stat().st_size
    if size % IQ_DTYPE.itemsize:
        raise StructuralError(f"IQ file {path}", f"multiple of {IQ_DTYPE.itemsize} bytes", size)
    samples = np.fromfile(path, dtype=IQ_DTYPE)
    meta = read_meta(path)
    rate = sample_rate if sample_rate is not None else float(meta.get("sample_rate", DEFAULT_SAMPLE_RATE))
    return IqStream(samples.astype(np.complex64), rate, meta)


def expected_decoded_difference(slips: int, n: int) -> int:
    """Bound on |decoded - sent| symbol counts after `slips` sample slips."""
    return math.ceil(slips / (2 * n)) + 1
