"""
Configuration Management for AE-Modem
=====================================

Two layers of configuration live here:

1. **Settings**: process-wide defaults (logging, output locations, evaluation
   sizes, gradient-check tolerances) loaded from environment variables with
   the ``AEMODEM_`` prefix or a ``.env`` file.
2. **Run configurations**: TOML files describing one training run
   (``[model]``, ``[channel]``, ``[optimizer]``, ``[training]`` tables),
   validated into a :class:`models.TrainConfig`.

Design Pattern: Singleton-like Settings
We use a cached function to ensure we only load settings once,
but still allow for easy testing with different configurations.
"""

import sys
from functools import lru_cache
from pathlib import Path
from typing import Any, Optional, Union

from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from exceptions import ConfigurationError
from models import (
    ChannelParams,
    ModelConfig,
    OptimizerConfig,
    TrainConfig,
)


class Settings(BaseSettings):
    """
    Application settings loaded from environment variables.

    Environment variables are prefixed with AEMODEM_ to avoid conflicts.
    Example: AEMODEM_EVAL_WORKERS=4

    Priority order (highest to lowest):
    1. Environment variables
    2. .env file
    3. Default values defined here
    """

    model_config = SettingsConfigDict(
        env_prefix="AEMODEM_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # =================================================================
    # Reproducibility
    # =================================================================
    default_seed: int = Field(
        default=1,
        description="Seed used when a run configuration or CLI call does not name one"
    )

    # =================================================================
    # Training Defaults
    # =================================================================
    train_es_n0_db: float = Field(
        default=5.0,
        description="""
        E_sample/N_0 of the training channel in dB.

        Training below ~0 dB does not converge; 5 dB is the operating point
        the shipped configurations use.
        """
    )

    checkpoint_interval: int = Field(
        default=10_000,
        ge=1,
        description="Steps between checkpoints written during training"
    )

    log_interval: int = Field(
        default=500,
        ge=1,
        description="Steps between training log records (mean loss, batch accuracy)"
    )

    # =================================================================
    # Evaluation
    # =================================================================
    eval_a_min: float = Field(
        default=0.01,
        gt=0.0,
        le=1.0,
        description="Minimum attenuation of the evaluation channel"
    )

    sweep_num_symbols: int = Field(
        default=1_000_000,
        ge=1,
        description="Symbols per SNR point for sweeps"
    )

    eval_chunk_symbols: int = Field(
        default=10_000,
        ge=1,
        description="""
        Monte Carlo chunk size. Each chunk owns its own random stream, so
        results do not depend on the number of workers.
        """
    )

    eval_batch_size: int = Field(
        default=2048,
        ge=1,
        description="Decoder batch size used during evaluation and streaming"
    )

    eval_workers: int = Field(
        default=1,
        ge=1,
        description="Thread workers for Monte Carlo evaluation"
    )

    # =================================================================
    # Streaming Runtime
    # =================================================================
    sample_rate: float = Field(
        default=1e6,
        gt=0.0,
        description="Nominal sample rate recorded in IQ sidecars (1 MHz bandwidth)"
    )

    ser_window_ms: float = Field(
        default=200.0,
        gt=0.0,
        description="Length of one windowed-SER entry in milliseconds of stream time"
    )

    # =================================================================
    # Gradient Check
    # =================================================================
    gradcheck_instances: int = Field(
        default=20,
        ge=1,
        description="Randomized instances per layer kind"
    )

    gradcheck_eps: float = Field(
        default=1e-3,
        gt=0.0,
        description="Central-difference step"
    )

    gradcheck_tolerance: float = Field(
        default=1e-2,
        gt=0.0,
        description="Maximum accepted max-norm relative error"
    )

    # =================================================================
    # Reports
    # =================================================================
    svg_width: int = Field(default=800, ge=100, description="Chart viewport width")
    svg_height: int = Field(default=600, ge=100, description="Chart viewport height")

    # =================================================================
    # Output Configuration
    # =================================================================
    output_dir: str = Field(
        default="./runs",
        description="Directory for artifacts when --out-dir is not given"
    )

    # =================================================================
    # Logging Configuration
    # =================================================================
    log_level: str = Field(
        default="INFO",
        description="Logging level: DEBUG, INFO, WARNING, ERROR, CRITICAL"
    )

    log_format: str = Field(
        default="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        description="Python logging format string"
    )


@lru_cache()
def get_settings() -> Settings:
    """
    Get application settings (cached singleton).

    For testing, you can clear the cache:
        get_settings.cache_clear()

    Returns:
        Settings: Application settings instance
    """
    return Settings()


def get_settings_for_testing(**overrides) -> Settings:
    """
    Create a Settings instance with custom values for testing.

    Example:
        settings = get_settings_for_testing(eval_chunk_symbols=500)
    """
    return Settings(**overrides)


# =============================================================================
# Run Configuration Files
# =============================================================================

def _format_validation_error(error: ValidationError, section: str) -> ConfigurationError:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"])
    field = f"{section}.{location}" if location else section
    return ConfigurationError(field, first["msg"])


def default_total_steps(model: ModelConfig) -> int:
    """Schedule default: 200k steps for 16-sample symbols, 150k otherwise."""
    return 200_000 if model.n >= 16 else 150_000


def train_config_from_mapping(
    data: dict[str, Any],
    settings: Optional[Settings] = None
) -> TrainConfig:
    """
    Validate a parsed TOML mapping into a TrainConfig.

    Missing values fall back to Settings (seed, E_sample/N_0, checkpoint
    interval) and to the schedule defaults.

    Raises:
        ConfigurationError: naming the first offending field
    """
    settings = settings or get_settings()
    known = {"model", "channel", "optimizer", "training"}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(sorted(unknown)[0], "unknown section")

    try:
        model = ModelConfig(**data.get("model", {}))
    except ValidationError as e:
        raise _format_validation_error(e, "model")
    except TypeError as e:
        raise ConfigurationError("model", str(e))

    channel_data = {"es_n0_db": settings.train_es_n0_db, "a_min": settings.eval_a_min}
    channel_data.update(data.get("channel", {}))
    try:
        channel = ChannelParams(**channel_data)
    except ValidationError as e:
        raise _format_validation_error(e, "channel")

    try:
        optimizer = OptimizerConfig(**data.get("optimizer", {}))
    except ValidationError as e:
        raise _format_validation_error(e, "optimizer")

    training = dict(data.get("training", {}))
    training.setdefault("seed", settings.default_seed)
    training.setdefault("total_steps", default_total_steps(model))
    training.setdefault("checkpoint_interval", settings.checkpoint_interval)
    training.setdefault("log_interval", settings.log_interval)
    try:
        return TrainConfig(model=model, channel=channel, optimizer=optimizer, **training)
    except ValidationError as e:
        raise _format_validation_error(e, "training")


def load_train_config(
    path: Union[str, Path],
    settings: Optional[Settings] = None
) -> TrainConfig:
    """
    Load and validate a TOML training configuration.

    Example file:
        [model]
        k = 8
        n = 8
        sfe_enabled = true

        [training]
        batch_size = 64
        seed = 7

    Raises:
        ConfigurationError: unreadable file, bad TOML, or invalid field
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigurationError(str(path), "config file not found")
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(str(path), f"invalid TOML: {e}")

    return train_config_from_mapping(data, settings=settings)
