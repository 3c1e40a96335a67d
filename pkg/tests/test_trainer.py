"""Training loop, checkpoint resume and Monte Carlo evaluation."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

import core.trainer as trainer
from core.channel import RngStream
from core.optimizer import Adam
from core.trainer import (
    StepResult,
    bpsk_ser_montecarlo,
    bpsk_ser_theoretical,
    evaluate_ser,
    sample_training_batch,
    sweep_amplitude,
    sweep_snr,
    train,
    training_step,
)
from exceptions import ConfigurationError, NumericalError, TrainingDivergedError
from models import ChannelParams, OptimizerConfig, TrainConfig


class TestTrainingStep:

    def test_batch_is_deterministic(self):
        a = sample_training_batch(RngStream(1).child(1).child(7), 16, 32)
        b = sample_training_batch(RngStream(1).child(1).child(7), 16, 32)
        assert a.shape == (32, 3)
        assert a.tobytes() == b.tobytes()
        assert a.min() >= 0 and a.max() < 16

    def test_initial_loss_near_uniform(self, tiny_model):
        triples = sample_training_batch(np.random.default_rng(0), tiny_model.config.M, 256)
        optimizer = Adam(tiny_model.parameters(), OptimizerConfig())
        result = training_step(tiny_model, triples, ChannelParams(es_n0_db=5.0), optimizer, RngStream(0))
        assert result.loss == pytest.approx(math.log(tiny_model.config.M), abs=0.75)
        assert 0.0 <= result.accuracy <= 1.0

    def test_step_moves_every_tensor(self, sfe_model):
        before = {k: v.copy() for k, v in sfe_model.parameters().items()}
        optimizer = Adam(sfe_model.parameters(), OptimizerConfig())
        triples = sample_training_batch(np.random.default_rng(1), sfe_model.config.M, 8)
        training_step(sfe_model, triples, ChannelParams(es_n0_db=5.0), optimizer, RngStream(1))
        after = sfe_model.parameters()
        moved = [name for name in before if not np.array_equal(before[name], after[name])]
        assert "embedding.table" in moved
        assert "sfe_conv_1.weight" in moved
        assert "dec_dense_6.weight" in moved


class TestTrain:

    def test_runs_and_logs(self, tiny_train_config):
        seen = []
        result = train(tiny_train_config, progress=lambda step, total, record: seen.append((step, total)))
        assert [r.step for r in result.log.records] == [10, 20, 30]
        assert seen == [(10, 30), (20, 30), (30, 30)]
        assert result.metadata.steps == 30
        assert result.resumed_from is None
        assert all(math.isfinite(r.loss) for r in result.log.records)

    def test_last_partial_interval_logged(self, tiny_train_config):
        config = tiny_train_config.model_copy(update={"total_steps": 25})
        assert [r.step for r in train(config).log.records] == [10, 20, 25]

    def test_same_seed_same_weights(self, tiny_train_config):
        config = tiny_train_config.model_copy(update={"total_steps": 5})
        a, b = train(config).model, train(config).model
        for name, value in a.parameters().items():
            assert value.tobytes() == b.parameters()[name].tobytes()

    def test_resume_matches_uninterrupted_run(self, tiny_train_config, tmp_path):
        full = train(tiny_train_config, out_dir=tmp_path)
        assert (tmp_path / "checkpoints").is_dir()

        resumed = train(tiny_train_config, out_dir=tmp_path, resume=True)
        assert resumed.resumed_from == 20
        assert [r.model_dump() for r in resumed.log.records] == [r.model_dump() for r in full.log.records]
        for name, value in full.model.parameters().items():
            assert value.tobytes() == resumed.model.parameters()[name].tobytes()

    def test_resume_without_checkpoint_starts_fresh(self, tiny_train_config, tmp_path):
        config = tiny_train_config.model_copy(update={"total_steps": 3})
        assert train(config, out_dir=tmp_path, resume=True).resumed_from is None

    def test_resume_needs_directory(self, tiny_train_config):
        with pytest.raises(ConfigurationError):
            train(tiny_train_config, resume=True)

    def test_zero_steps_rejected(self, tiny_config):
        with pytest.raises(ValidationError):
            TrainConfig(model=tiny_config, total_steps=0)


class TestDivergence:

    def test_loss_stuck_above_threshold(self, tiny_train_config, monkeypatch):
        monkeypatch.setattr(trainer, "training_step", lambda *args: StepResult(loss=50.0, accuracy=0.0))
        config = tiny_train_config.model_copy(update={"divergence_grace_steps": 4, "divergence_patience": 3})
        with pytest.raises(TrainingDivergedError) as excinfo:
            train(config)
        assert excinfo.value.details["step"] == 7
        assert excinfo.value.exit_code == 2

    def test_recovering_loss_resets_patience(self, tiny_train_config, monkeypatch):
        losses = iter([50.0, 50.0, 0.1] * 10)
        monkeypatch.setattr(trainer, "training_step",
                            lambda *args: StepResult(loss=next(losses), accuracy=0.5))
        config = tiny_train_config.model_copy(update={"divergence_grace_steps": 0, "divergence_patience": 3})
        assert len(train(config).log.records) == 3

    def test_non_finite_loss(self, tiny_train_config, monkeypatch):
        def explode(*args):
            raise NumericalError(-1, "loss", "forward")

        monkeypatch.setattr(trainer, "training_step", explode)
        with pytest.raises(TrainingDivergedError) as excinfo:
            train(tiny_train_config)
        assert excinfo.value.details["step"] == 1


class TestEvaluation:

    def test_worker_count_does_not_change_result(self, tiny_model):
        channel = ChannelParams(es_n0_db=5.0)
        one = evaluate_ser(tiny_model, channel, 3000, RngStream(2), chunk_symbols=700, workers=1)
        many = evaluate_ser(tiny_model, channel, 3000, RngStream(2), chunk_symbols=700, workers=3)
        assert one.symbol_errors == many.symbol_errors
        assert one.symbols_sent == 3000
        assert one.eb_n0_db == pytest.approx(5.0)

    def test_rejects_empty_run(self, tiny_model):
        with pytest.raises(ConfigurationError):
            evaluate_ser(tiny_model, ChannelParams(), 0, RngStream(0))

    def test_sweep_points(self, tiny_model):
        records = sweep_snr(tiny_model, [0.0, 10.0], 500, RngStream(3), chunk_symbols=250)
        assert [r.es_n0_db for r in records] == [0.0, 10.0]
        assert all(r.ser == r.symbol_errors / 500 for r in records)

    def test_amplitude_sweep(self, tiny_model):
        records = sweep_amplitude(tiny_model, [0.1, 1.0], 10.0, 400, RngStream(4))
        assert [r.amplitude for r in records] == [0.1, 1.0]
        assert all(r.es_n0_db == 10.0 for r in records)

    @pytest.mark.slow
    def test_training_learns_easy_channel(self, tiny_config):
        channel = ChannelParams(es_n0_db=10.0, fixed_phase=0.0, fixed_attenuation=1.0, fixed_offset=0)
        config = TrainConfig(model=tiny_config, channel=channel, batch_size=32, total_steps=1500,
                             log_interval=500, checkpoint_interval=1000)
        model = train(config).model
        record = evaluate_ser(model, channel, 4000, RngStream(9))
        assert record.ser < 0.1


class TestBpskBaseline:

    def test_theory_at_zero_db(self):
        assert float(bpsk_ser_theoretical(0.0)) == pytest.approx(0.0786, abs=1e-4)

    def test_theory_is_decreasing(self):
        values = bpsk_ser_theoretical([0.0, 4.0, 8.0])
        assert values[0] > values[1] > values[2]

    def test_montecarlo_agrees_with_theory(self):
        measured = bpsk_ser_montecarlo(2.0, 400_000, np.random.default_rng(5), chunk_bits=100_000)
        assert measured == pytest.approx(float(bpsk_ser_theoretical(2.0)), rel=0.05)
