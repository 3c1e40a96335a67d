"""
Domain Models for AE-Modem
==========================

This module defines the configuration and record types used throughout the
application. We use Pydantic for:

1. **Validation**: ranges such as 0 < a_min <= 1 or total_steps >= 1 are
   enforced at construction time
2. **Serialization**: weight bundles, manifests and logs are JSON documents
3. **Documentation**: self-documenting with type hints

Design Principle: These models are "pure" - they have no dependencies on
numpy arrays or services. Array-carrying runtime state (optimizer moments,
IQ streams, channel draws) lives in dataclasses next to the code using it.
"""

import math
import re
from datetime import datetime
from enum import Enum
from typing import Any, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


TOOL_VERSION = "1.0.0"

_MODEL_NAME = re.compile(r"^AE-(\d+)/(\d+)(-2)?$")


class RunStatus(str, Enum):
    """
    Status of a CLI/pipeline run.

    Using str, Enum allows JSON serialization in manifests and progress
    callbacks while keeping type safety.
    """
    PENDING = "pending"
    TRAINING = "training"
    EVALUATING = "evaluating"
    STREAMING = "streaming"
    VERIFYING = "verifying"
    REPORTING = "reporting"
    COMPLETED = "completed"
    FAILED = "failed"


# =============================================================================
# Model and Channel Configuration
# =============================================================================

class ModelConfig(BaseModel):
    """
    Names one autoencoder variant AE-k/n.

    Attributes:
        k: Bits per symbol (M = 2^k messages)
        n: Complex samples per symbol
        sfe_enabled: Whether the decoder carries the synchronization
            feature estimator branch (variants without it get a "-2" suffix)
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    k: int = Field(..., ge=1, le=16, description="Bits per symbol")
    n: int = Field(..., ge=1, le=256, description="Complex samples per symbol")
    sfe_enabled: bool = Field(default=True, description="Decoder has the SFE branch")

    @property
    def M(self) -> int:
        """Number of distinct symbols."""
        return 2 ** self.k

    @property
    def W(self) -> int:
        """Receiver window length in complex samples."""
        return 3 * self.n - 1

    @property
    def name(self) -> str:
        base = f"AE-{self.k}/{self.n}"
        return base if self.sfe_enabled else f"{base}-2"

    @property
    def file_stem(self) -> str:
        """Name usable as a file name ('/' is not)."""
        return self.name.replace("/", "_")

    @classmethod
    def from_name(cls, name: str) -> "ModelConfig":
        """Parse "AE-8/8" or "AE-8/8-2"."""
        match = _MODEL_NAME.match(name.strip())
        if not match:
            raise ValueError(f"Not a model name: {name!r} (expected AE-k/n or AE-k/n-2)")
        return cls(k=int(match.group(1)), n=int(match.group(2)), sfe_enabled=match.group(3) is None)


def _parse_optional_db(value: Any) -> Optional[float]:
    if value is None:
        return None
    if isinstance(value, str):
        if value.strip().lower() in {"off", "none", "inf", "+inf"}:
            return None
        value = float(value)
    if math.isinf(value) and value > 0:
        return None
    return float(value)


class ChannelParams(BaseModel):
    """
    Distribution parameters of the training/evaluation channel.

    Per frame the channel draws a phase phi ~ U[0, phase_max), an
    attenuation a ~ U[a_min, 1] and a window offset m ~ U{-n+1, ..., n}.
    Any of the three can be pinned with the fixed_* fields.

    Attributes:
        es_n0_db: E_sample/N_0 in dB; None disables the noise
        a_min: Lower bound of the attenuation draw
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    es_n0_db: Optional[float] = Field(default=5.0, description="E_sample/N_0 in dB, None = noise off")
    a_min: float = Field(default=0.01, gt=0.0, le=1.0)
    phase_max: float = Field(default=2 * math.pi, ge=0.0, le=2 * math.pi)
    fixed_phase: Optional[float] = Field(default=None)
    fixed_attenuation: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    fixed_offset: Optional[int] = Field(default=None)

    @field_validator("es_n0_db", mode="before")
    @classmethod
    def parse_noise(cls, v):
        return _parse_optional_db(v)

    @property
    def noise_enabled(self) -> bool:
        return self.es_n0_db is not None

    @staticmethod
    def offset_range(n: int) -> tuple[int, int]:
        """Inclusive range of admissible window offsets for n samples per symbol."""
        return -n + 1, n

    def with_snr(self, es_n0_db: Optional[float]) -> "ChannelParams":
        return self.model_copy(update={"es_n0_db": es_n0_db})

    @classmethod
    def clean(cls) -> "ChannelParams":
        """Impairment-free channel: no noise, a = 1, phi = 0, m = 0."""
        return cls(es_n0_db=None, fixed_phase=0.0, fixed_attenuation=1.0, fixed_offset=0)


class StreamChannelParams(BaseModel):
    """
    Parameters of the streaming (deployment-style) channel.

    Attributes:
        es_n0_db: E_sample/N_0 in dB; None disables the noise
        attenuation: Starting (or fixed) amplitude factor
        attenuation_walk: Std-dev of the per-sample amplitude random walk
        phase_walk_step: Std-dev of the per-sample phase random walk (radians)
        drift_ppm: Clock drift; positive deletes, negative duplicates samples
    """
    model_config = ConfigDict(frozen=True)

    es_n0_db: Optional[float] = Field(default=None)
    attenuation: float = Field(default=1.0, gt=0.0, le=1.0)
    attenuation_walk: float = Field(default=0.0, ge=0.0)
    a_min: float = Field(default=0.01, gt=0.0, le=1.0)
    phase_walk_step: float = Field(default=0.0, ge=0.0)
    initial_phase: float = Field(default=0.0)
    drift_ppm: float = Field(default=0.0)

    @field_validator("es_n0_db", mode="before")
    @classmethod
    def parse_noise(cls, v):
        return _parse_optional_db(v)

    @property
    def slip_period(self) -> Optional[int]:
        """Samples between single-sample slips, None without drift."""
        if self.drift_ppm == 0:
            return None
        return max(1, round(1e6 / abs(self.drift_ppm)))


class OptimizerConfig(BaseModel):
    """Adaptive-moment optimizer hyperparameters."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(default=1e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    epsilon: float = Field(default=1e-8, gt=0.0)


class TrainConfig(BaseModel):
    """
    One end-to-end training run.

    Divergence rule: after `divergence_grace_steps` steps, a loss above
    ln M + `divergence_margin` for `divergence_patience` consecutive steps
    aborts the run.
    """
    model_config = ConfigDict(extra="forbid")

    model: ModelConfig
    channel: ChannelParams = Field(default_factory=ChannelParams)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    batch_size: int = Field(default=64, ge=1)
    total_steps: int = Field(default=150_000, ge=1)
    seed: int = Field(default=1)
    checkpoint_interval: int = Field(default=10_000, ge=1)
    log_interval: int = Field(default=500, ge=1)
    divergence_margin: float = Field(default=2.0, gt=0.0)
    divergence_patience: int = Field(default=1000, ge=1)
    divergence_grace_steps: int = Field(default=10_000, ge=0)


# =============================================================================
# Training and Evaluation Records
# =============================================================================

class TrainLogRecord(BaseModel):
    """Mean loss and training-batch accuracy over one log interval."""
    step: int = Field(..., ge=0)
    loss: float
    accuracy: float = Field(..., ge=0.0, le=1.0)


class TrainLog(BaseModel):
    """Ordered training log; steps strictly increase."""
    records: List[TrainLogRecord] = Field(default_factory=list)

    @field_validator("records")
    @classmethod
    def steps_increase(cls, v: List[TrainLogRecord]) -> List[TrainLogRecord]:
        for earlier, later in zip(v, v[1:]):
            if later.step <= earlier.step:
                raise ValueError(f"log steps must increase: {earlier.step} then {later.step}")
        return v

    def append(self, record: TrainLogRecord) -> None:
        if self.records and record.step <= self.records[-1].step:
            raise ValueError(f"log steps must increase: {self.records[-1].step} then {record.step}")
        self.records.append(record)


class SweepRecord(BaseModel):
    """
    One (model, SNR) point of a benchmark run.

    `amplitude` is set for amplitude sweeps (fixed attenuation a).
    """
    model: str
    es_n0_db: Optional[float] = None
    eb_n0_db: Optional[float] = None
    symbols_sent: int = Field(..., ge=1)
    symbol_errors: int = Field(..., ge=0)
    ser: float = Field(..., ge=0.0, le=1.0)
    amplitude: Optional[float] = None

    @model_validator(mode="after")
    def ser_matches_counts(self) -> "SweepRecord":
        if self.symbol_errors > self.symbols_sent:
            raise ValueError("symbol_errors exceeds symbols_sent")
        if abs(self.ser - self.symbol_errors / self.symbols_sent) > 1e-12:
            raise ValueError("ser must equal symbol_errors / symbols_sent")
        return self

    @classmethod
    def from_counts(cls, model: str, symbols: int, errors: int, **fields) -> "SweepRecord":
        return cls(model=model, symbols_sent=symbols, symbol_errors=errors, ser=errors / symbols, **fields)


class StreamReport(BaseModel):
    """
    Result of a streaming run (tx -> stream channel -> rx).

    Attributes:
        windowed_ser: One SER value per non-overlapping window of
            `window_symbols` aligned symbols
        throughput_bps: Wall-clock decoded bits per second
    """
    model: str
    symbols_sent: int = Field(..., ge=0)
    symbols_decoded: int = Field(..., ge=0)
    symbol_errors: Optional[int] = Field(default=None, ge=0)
    ser: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    alignment_lag: Optional[int] = None
    window_symbols: int = Field(..., ge=1)
    windowed_ser: List[float] = Field(default_factory=list)
    slips: int = Field(default=0, ge=0)
    predicted_period_windows: Optional[float] = None
    dominant_period_windows: Optional[int] = None
    throughput_bps: Optional[float] = Field(default=None, ge=0.0)

    @field_validator("windowed_ser")
    @classmethod
    def entries_are_rates(cls, v: List[float]) -> List[float]:
        for value in v:
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"windowed SER entry {value} outside [0, 1]")
        return v


# =============================================================================
# Weight Bundles
# =============================================================================

class LayerRecord(BaseModel):
    """One named parameter tensor, flattened row-major."""
    name: str
    shape: List[int]
    values: List[float]

    @model_validator(mode="after")
    def size_matches_shape(self) -> "LayerRecord":
        if any(dim <= 0 for dim in self.shape):
            raise ValueError(f"non-positive dimension in shape {self.shape}")
        if math.prod(self.shape) != len(self.values):
            raise ValueError(f"shape {self.shape} does not match {len(self.values)} values")
        return self


class BundleConfig(BaseModel):
    k: int
    n: int
    sfe_enabled: bool
    name: str

    def to_model_config(self) -> ModelConfig:
        return ModelConfig(k=self.k, n=self.n, sfe_enabled=self.sfe_enabled)

    @classmethod
    def from_model_config(cls, config: ModelConfig) -> "BundleConfig":
        return cls(k=config.k, n=config.n, sfe_enabled=config.sfe_enabled, name=config.name)


class BundleMetadata(BaseModel):
    seed: Optional[int] = None
    steps: int = Field(default=0, ge=0)
    train_es_n0_db: Optional[float] = None


class WeightBundle(BaseModel):
    """Persisted encoder + decoder weights with the config they belong to."""
    format_version: int = 1
    config: BundleConfig
    metadata: BundleMetadata = Field(default_factory=BundleMetadata)
    layers: List[LayerRecord]


# =============================================================================
# Verification, Reports and Manifests
# =============================================================================

class LayerRow(BaseModel):
    """One row of the architecture table (section, layer, parameters, output dims)."""
    section: str
    name: str
    kind: str
    parameters: int
    output_shape: List[int]


class GradCheckResult(BaseModel):
    """Finite-difference verdict for one layer kind (or the composite network)."""
    layer: str
    kind: str
    instances: int
    checked: int
    excluded: int
    max_rel_error: float
    passed: bool


class ReportAxis(str, Enum):
    EB_N0 = "eb_n0"
    ES_N0 = "es_n0"
    AMPLITUDE = "amplitude"
    WINDOW = "window"


class ReportSpec(BaseModel):
    """Which CSVs to chart, against which axis, with which overlays."""
    inputs: List[str] = Field(..., min_length=1)
    axis: ReportAxis = ReportAxis.EB_N0
    log_scale: bool = True
    bpsk_overlay: bool = True
    title: Optional[str] = None


class RunManifest(BaseModel):
    """
    Everything needed to reproduce one CLI invocation.

    `config` holds the fully resolved arguments of the pipeline method;
    replaying passes them back unchanged.
    """
    command: str
    config: dict[str, Any]
    seed: Optional[int] = None
    artifacts: List[str] = Field(default_factory=list)
    tool_version: str = TOOL_VERSION
    status: RunStatus = RunStatus.PENDING
    started_at: datetime
    finished_at: Optional[datetime] = None
    metrics: dict[str, Any] = Field(default_factory=dict)
    error: Optional[dict] = None
