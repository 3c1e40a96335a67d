"""
Training and Evaluation
=======================

End-to-end training of encoder -> channel -> decoder, plus the Monte Carlo
symbol-error-rate machinery used by the benchmarks.

Reproducibility
---------------
Every step t draws its batch and channel from ``RngStream(seed).child(1).child(t)``,
so a run resumed from a checkpoint (weights + optimizer state + log state)
continues exactly as the uninterrupted run would. Monte Carlo evaluation
splits the trials into fixed-size chunks, each with its own child stream;
counts are merged afterwards, so the result does not depend on how many
workers evaluated the chunks.
"""

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erfc

from core.channel import (
    RandomSource,
    RngStream,
    _generator,
    assemble_training_frames,
    backward_training_frames,
    channel_backward,
    channel_pass,
    es_to_eb,
    noise_variance,
)
from core.modem import Autoencoder
from core.network import accuracy, mean_cross_entropy, softmax_cross_entropy_grad
from core.optimizer import Adam
from core.weights import checkpoint_paths, latest_checkpoint, load_weights, save_weights
from exceptions import ConfigurationError, NumericalError, TrainingDivergedError
from models import (
    BundleMetadata,
    ChannelParams,
    SweepRecord,
    TrainConfig,
    TrainLog,
    TrainLogRecord,
)


logger = logging.getLogger(__name__)

INIT_STREAM = 0
STEP_STREAM = 1

ProgressFn = Callable[[int, int, Optional[TrainLogRecord]], None]


# =============================================================================
# Training
# =============================================================================

def sample_training_batch(rng: RandomSource, M: int, batch_size: int) -> np.ndarray:
    """(batch_size, 3) i.i.d. uniform symbols (s_prev, s_cur, s_next); labels are column 1."""
    return _generator(rng).integers(0, M, size=(batch_size, 3), dtype=np.int64)


@dataclass
class StepResult:
    loss: float
    accuracy: float


def training_step(
    model: Autoencoder,
    triples: np.ndarray,
    channel: ChannelParams,
    optimizer: Adam,
    rng: RandomSource,
) -> StepResult:
    """
    One optimizer update over the mean cross entropy of a batch.

    Gradients flow decoder -> channel (draws fixed) -> frame segments ->
    the single shared encoder, so the pilot and data segments of all five
    frame positions contribute to the same encoder weights.
    """
    frame = assemble_training_frames(model.encoder, triples)
    windows, draws = channel_pass(frame.samples, channel, rng)
    probs, cache = model.decoder.forward(windows)
    loss, _ = mean_cross_entropy(probs, frame.labels)
    if not math.isfinite(loss):
        raise NumericalError(-1, "loss", "forward")

    grad_logits = softmax_cross_entropy_grad(probs, frame.labels)
    grad_windows, grads = model.decoder.backward(cache, grad_logits)
    grad_frames = channel_backward(grad_windows, draws, frame.samples.shape[1])
    grads.update(backward_training_frames(model.encoder, frame, grad_frames))
    optimizer.step(grads)
    return StepResult(loss=loss, accuracy=accuracy(probs, frame.labels))


@dataclass
class TrainState:
    """Everything besides weights and moments that a resumed run needs."""
    log: TrainLog = field(default_factory=TrainLog)
    pending_losses: list[float] = field(default_factory=list)
    pending_accuracy: list[float] = field(default_factory=list)
    over_threshold: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "log": self.log.model_dump(),
            "pending_losses": self.pending_losses,
            "pending_accuracy": self.pending_accuracy,
            "over_threshold": self.over_threshold,
        })

    @classmethod
    def from_json(cls, text: str) -> "TrainState":
        data = json.loads(text)
        return cls(
            log=TrainLog.model_validate(data["log"]),
            pending_losses=list(data["pending_losses"]),
            pending_accuracy=list(data["pending_accuracy"]),
            over_threshold=int(data["over_threshold"]),
        )


@dataclass
class TrainResult:
    model: Autoencoder
    log: TrainLog
    metadata: BundleMetadata
    resumed_from: Optional[int] = None


def _state_path(weights_path: Path) -> Path:
    return weights_path.with_suffix(".state.json")


def _save_checkpoint(out_dir: Path, config: TrainConfig, step: int, model: Autoencoder,
                     optimizer: Adam, state: TrainState) -> None:
    weights_path, optimizer_path = checkpoint_paths(out_dir, config.model, step)
    metadata = BundleMetadata(seed=config.seed, steps=step, train_es_n0_db=config.channel.es_n0_db)
    save_weights(model, weights_path, metadata)
    optimizer.save(optimizer_path)
    _state_path(weights_path).write_text(state.to_json(), encoding="utf-8")
    logger.info(f"Checkpoint at step {step} written to {weights_path.parent}")


def train(
    config: TrainConfig,
    out_dir: Optional[os.PathLike] = None,
    resume: bool = False,
    progress: Optional[ProgressFn] = None,
) -> TrainResult:
    """
    Train an autoencoder from scratch (or from the latest checkpoint).

    Args:
        config: Validated run configuration
        out_dir: Where checkpoints go; None disables checkpointing
        resume: Continue from the highest-step checkpoint under out_dir
        progress: Called as (step, total_steps, record) at every log record

    Raises:
        TrainingDivergedError: Loss stuck above ln M + margin, or non-finite
    """
    M = config.model.M
    root = RngStream(config.seed)
    model = Autoencoder.create(config.model, root.child(INIT_STREAM).generator)
    optimizer = Adam(model.parameters(), config.optimizer)
    state = TrainState()
    start_step = 1
    resumed_from = None

    if resume:
        if out_dir is None:
            raise ConfigurationError("resume", "resuming needs an output directory with checkpoints")
        found = latest_checkpoint(out_dir, config.model)
        if found is None:
            logger.warning(f"No checkpoint under {out_dir}; starting from step 1")
        else:
            step, weights_path, optimizer_path = found
            loaded, _ = load_weights(weights_path, expected=config.model)
            for name, value in loaded.parameters().items():
                model.set_parameter(name, value)
            optimizer = Adam(model.parameters(), config.optimizer)
            optimizer.load(optimizer_path)
            state = TrainState.from_json(_state_path(weights_path).read_text(encoding="utf-8"))
            start_step = step + 1
            resumed_from = step
            logger.info(f"Resuming {config.model.name} from step {step}")

    threshold = math.log(M) + config.divergence_margin
    steps = root.child(STEP_STREAM)
    logger.info(
        f"Training {config.model.name}: {config.total_steps} steps, batch {config.batch_size}, "
        f"Es/N0 {config.channel.es_n0_db} dB, seed {config.seed}"
    )

    for step in range(start_step, config.total_steps + 1):
        rng = steps.child(step).generator
        triples = sample_training_batch(rng, M, config.batch_size)
        try:
            result = training_step(model, triples, config.channel, optimizer, rng)
        except NumericalError as e:
            raise TrainingDivergedError(step, f"non-finite value in {e.details.get('layer_name')}",
                                        state.pending_losses[-10:]) from e

        state.pending_losses.append(result.loss)
        state.pending_accuracy.append(result.accuracy)

        if step > config.divergence_grace_steps and result.loss > threshold:
            state.over_threshold += 1
            if state.over_threshold >= config.divergence_patience:
                raise TrainingDivergedError(
                    step,
                    f"loss above ln M + {config.divergence_margin} for {state.over_threshold} steps",
                    state.pending_losses[-10:],
                )
        else:
            state.over_threshold = 0

        if step % config.log_interval == 0 or step == config.total_steps:
            record = TrainLogRecord(
                step=step,
                loss=float(np.mean(state.pending_losses)),
                accuracy=float(np.mean(state.pending_accuracy)),
            )
            state.log.append(record)
            state.pending_losses.clear()
            state.pending_accuracy.clear()
            logger.info(f"step {step}/{config.total_steps}  loss {record.loss:.4f}  acc {record.accuracy:.4f}")
            if progress is not None:
                progress(step, config.total_steps, record)

        if out_dir is not None and step % config.checkpoint_interval == 0 and step < config.total_steps:
            _save_checkpoint(Path(out_dir), config, step, model, optimizer, state)

    metadata = BundleMetadata(seed=config.seed, steps=config.total_steps, train_es_n0_db=config.channel.es_n0_db)
    return TrainResult(model=model, log=state.log, metadata=metadata, resumed_from=resumed_from)


# =============================================================================
# Monte Carlo evaluation
# =============================================================================

def _count_errors(model: Autoencoder, channel: ChannelParams, trials: int,
                  rng: RngStream, batch_size: int) -> int:
    gen = rng.generator
    errors = 0
    remaining = trials
    while remaining > 0:
        size = min(batch_size, remaining)
        triples = sample_training_batch(gen, model.config.M, size)
        frame = assemble_training_frames(model.encoder, triples)
        windows, _ = channel_pass(frame.samples, channel, gen)
        _, decided = model.decoder.decode_batch(windows)
        errors += int((decided != frame.labels).sum())
        remaining -= size
    return errors


def evaluate_ser(
    model: Autoencoder,
    channel: ChannelParams,
    num_symbols: int,
    rng: RngStream,
    chunk_symbols: int = 10_000,
    batch_size: int = 2048,
    workers: int = 1,
    **record_fields,
) -> SweepRecord:
    """
    Symbol error rate over `num_symbols` fresh frames through `channel`.

    Chunk i always uses rng.child(i), so the count is the same for any
    number of workers.
    """
    if num_symbols < 1:
        raise ConfigurationError("num_symbols", f"must be >= 1, got {num_symbols}")
    sizes = [min(chunk_symbols, num_symbols - start) for start in range(0, num_symbols, chunk_symbols)]
    jobs = [(size, rng.child(index)) for index, size in enumerate(sizes)]

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(lambda job: _count_errors(model, channel, job[0], job[1], batch_size), jobs))
    else:
        counts = [_count_errors(model, channel, size, stream, batch_size) for size, stream in jobs]

    errors = sum(counts)
    cfg = model.config
    es = channel.es_n0_db
    fields = {"es_n0_db": es, "eb_n0_db": es_to_eb(es, cfg.k, cfg.n) if es is not None else None}
    fields.update(record_fields)
    record = SweepRecord.from_counts(cfg.name, num_symbols, errors, **fields)
    logger.info(f"{cfg.name} Es/N0={es} dB: {errors}/{num_symbols} errors, SER {record.ser:.3e}")
    return record


def sweep_snr(
    model: Autoencoder,
    es_n0_db: Sequence[float],
    num_symbols: int,
    rng: RngStream,
    channel: Optional[ChannelParams] = None,
    **eval_options,
) -> list[SweepRecord]:
    """One record per SNR point; point i evaluates with rng.child(i)."""
    base = channel or ChannelParams()
    return [
        evaluate_ser(model, base.with_snr(snr), num_symbols, rng.child(index), **eval_options)
        for index, snr in enumerate(es_n0_db)
    ]


def sweep_amplitude(
    model: Autoencoder,
    amplitudes: Sequence[float],
    es_n0_db: Optional[float],
    num_symbols: int,
    rng: RngStream,
    channel: Optional[ChannelParams] = None,
    **eval_options,
) -> list[SweepRecord]:
    """
    SER with the attenuation pinned to each amplitude a.

    Noise stays referenced to unit sample energy, so lowering a lowers the
    effective SNR by 20 log10(a) dB.
    """
    base = (channel or ChannelParams()).with_snr(es_n0_db)
    records = []
    for index, a in enumerate(amplitudes):
        params = base.model_copy(update={"fixed_attenuation": float(a)})
        records.append(evaluate_ser(model, params, num_symbols, rng.child(index), amplitude=float(a), **eval_options))
    return records


# =============================================================================
# BPSK baseline
# =============================================================================

def bpsk_ser_theoretical(eb_n0_db) -> np.ndarray:
    """Q(sqrt(2 Eb/N0)) = erfc(sqrt(Eb/N0)) / 2."""
    ratio = 10.0 ** (np.asarray(eb_n0_db, dtype=np.float64) / 10.0)
    return 0.5 * erfc(np.sqrt(ratio))


def bpsk_ser_montecarlo(
    eb_n0_db: float,
    num_bits: int,
    rng: RandomSource,
    chunk_bits: int = 1_000_000,
) -> float:
    """Antipodal +-1 on the real axis, one bit per complex sample, sign detector."""
    gen = _generator(rng)
    sigma = math.sqrt(noise_variance(eb_n0_db) / 2.0)
    errors = 0
    remaining = num_bits
    while remaining > 0:
        size = min(chunk_bits, remaining)
        bits = gen.integers(0, 2, size=size)
        received = (1.0 - 2.0 * bits) + gen.normal(0.0, sigma, size=size)
        errors += int(((received < 0).astype(np.int64) != bits).sum())
        remaining -= size
    return errors / num_bits

