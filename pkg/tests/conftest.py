"""
Shared fixtures.

Most tests use AE-2/2-2 (4 symbols, 2 samples, no SFE): the smallest model
that exercises every code path except the SFE branch. AE-2/7 adds the SFE
with the shortest admissible window.
"""

import numpy as np
import pytest

from config import get_settings_for_testing
from core.channel import RngStream
from core.modem import Autoencoder
from core.trainer import train
from core.weights import bundle_path, save_weights
from models import ChannelParams, ModelConfig, TrainConfig


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(k=2, n=2, sfe_enabled=False)


@pytest.fixture
def sfe_config() -> ModelConfig:
    return ModelConfig(k=2, n=7, sfe_enabled=True)


@pytest.fixture
def tiny_model(tiny_config) -> Autoencoder:
    return Autoencoder.create(tiny_config, RngStream(3).generator)


@pytest.fixture
def sfe_model(sfe_config) -> Autoencoder:
    return Autoencoder.create(sfe_config, RngStream(4).generator)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_train_config(tiny_config) -> TrainConfig:
    return TrainConfig(
        model=tiny_config,
        channel=ChannelParams(es_n0_db=10.0),
        batch_size=16,
        total_steps=30,
        seed=5,
        checkpoint_interval=10,
        log_interval=10,
    )


@pytest.fixture
def settings(tmp_path):
    return get_settings_for_testing(
        output_dir=str(tmp_path / "runs"),
        sweep_num_symbols=2_000,
        eval_chunk_symbols=500,
        eval_batch_size=256,
        gradcheck_instances=2,
    )


@pytest.fixture(scope="session")
def trained_bundle(tmp_path_factory):
    """AE-2/2-2 weight bundle after a few training steps."""
    config = TrainConfig(
        model=ModelConfig(k=2, n=2, sfe_enabled=False),
        channel=ChannelParams(es_n0_db=10.0),
        batch_size=16,
        total_steps=20,
        seed=2,
        log_interval=10,
    )
    result = train(config)
    directory = tmp_path_factory.mktemp("bundle")
    return save_weights(result.model, bundle_path(directory, config.model), result.metadata)
