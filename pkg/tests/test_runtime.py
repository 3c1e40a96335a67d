"""Streaming tx/rx, sequence alignment, periodicity and IQ files."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core.channel import assemble_training_frames, extract_window
from core.runtime import (
    IqStream,
    align_sequences,
    dominant_period,
    expected_decoded_difference,
    measure_throughput,
    nominal_bit_rate,
    predicted_period_windows,
    read_iq,
    read_meta,
    rx_stream,
    rx_window_count,
    rx_windows,
    stream_window_symbols,
    tracked_windowed_ser,
    tx_stream,
    window_symbols_for,
    windowed_ser,
    write_iq,
)
from exceptions import AlignmentError, InputDomainError, StructuralError
from models import ModelConfig, StreamChannelParams


class TestTransmit:

    def test_pilot_first_interleave(self, tiny_model):
        enc = tiny_model.encoder
        n = tiny_model.config.n
        stream = tx_stream(enc, [1, 2, 3])
        assert len(stream) == 2 * n * 3
        assert_array_equal(stream.samples[:n], enc.pilot)
        assert_array_equal(stream.samples[n:2 * n], enc.encode(1))
        assert_array_equal(stream.samples[2 * n:3 * n], enc.pilot)
        assert_array_equal(stream.samples[5 * n:], enc.encode(3))
        assert stream.metadata == {"model": "AE-2/2-2", "symbols": 3}

    def test_empty(self, tiny_model):
        assert len(tx_stream(tiny_model.encoder, [])) == 0

    def test_non_finite_samples_rejected(self):
        with pytest.raises(InputDomainError):
            IqStream(np.array([1.0, np.nan], dtype=np.complex64))


class TestReceive:

    def test_window_count(self, tiny_config):
        # n = 2, W = 5, hop 4
        assert rx_window_count(12, 0, tiny_config) == 2
        assert rx_window_count(13, 0, tiny_config) == 3
        assert rx_window_count(13, 1, tiny_config) == 2
        assert rx_window_count(4, 0, tiny_config) == 0

    def test_windows_hop_by_two_n(self, tiny_config):
        samples = np.arange(20).astype(np.complex64)
        windows = rx_windows(samples, 3, tiny_config)
        assert windows.shape == (4, 5)
        assert windows[:, 0].real.tolist() == [3, 7, 11, 15]

    def test_decodes_each_window(self, tiny_model, rng):
        symbols = rng.integers(0, tiny_model.config.M, size=50)
        stream = tx_stream(tiny_model.encoder, symbols)
        decoded = rx_stream(tiny_model.decoder, stream, 1, batch_size=7)
        windows = np.ascontiguousarray(rx_windows(stream, 1, tiny_model.config))
        assert_array_equal(decoded, tiny_model.decoder.decode_batch(windows)[1])

    @pytest.mark.parametrize("start_offset", range(4))
    def test_every_offset_sees_training_windows(self, tiny_model, rng, start_offset):
        cfg = tiny_model.config
        assert 2 * cfg.n == 4
        sent = rng.integers(0, cfg.M, size=40)
        stream = tx_stream(tiny_model.encoder, sent)
        decoded = rx_stream(tiny_model.decoder, stream, start_offset)
        # past offset n the window holds the next data symbol at a negative frame offset
        shift = int(start_offset > cfg.n)
        m = start_offset - 2 * cfg.n * shift
        index = np.arange(1, len(decoded))
        index = index[index + shift + 1 < len(sent)]
        j = index + shift
        frames = assemble_training_frames(tiny_model.encoder, np.stack([sent[j - 1], sent[j], sent[j + 1]], axis=1))
        expected = extract_window(frames.samples, m)
        assert len(index) > 30
        assert_allclose(rx_windows(stream, start_offset, cfg)[index], expected, rtol=1e-6, atol=1e-6)
        _, symbols = tiny_model.decoder.decode_batch(np.ascontiguousarray(expected))
        assert_array_equal(decoded[index], symbols)

    def test_short_stream_decodes_nothing(self, tiny_model):
        assert rx_stream(tiny_model.decoder, np.zeros(3, np.complex64), 0).size == 0

    def test_negative_offset(self, tiny_model):
        with pytest.raises(InputDomainError):
            rx_stream(tiny_model.decoder, np.zeros(30, np.complex64), -1)


class TestAlignment:

    def test_positive_lag(self):
        sent = np.arange(10)
        alignment = align_sequences(sent, sent[2:], max_lag=3)
        assert (alignment.lag, alignment.ser, alignment.overlap) == (2, 0.0, 8)

    def test_negative_lag(self):
        sent = np.arange(10)
        decoded = np.concatenate([[99, 99], sent])
        assert align_sequences(sent, decoded, max_lag=3).lag == -2

    def test_tie_prefers_smallest_lag(self):
        alignment = align_sequences([2, 2, 2, 2], [2, 2], max_lag=1)
        assert alignment.lag == 0
        assert alignment.matches == 2

    def test_errors_counted(self):
        alignment = align_sequences([1, 2, 3, 4], [1, 0, 3, 4], max_lag=0)
        assert alignment.ser == pytest.approx(0.25)

    def test_no_overlap(self):
        with pytest.raises(AlignmentError):
            align_sequences([], [1, 2], max_lag=2)
        with pytest.raises(InputDomainError):
            align_sequences([1], [1], max_lag=-1)


class TestWindowedSer:

    def test_partial_window_dropped(self):
        sent = np.arange(10)
        decoded = sent.copy()
        decoded[[1, 7]] = -1
        assert windowed_ser(sent, decoded, 0, 4) == [0.25, 0.25]
        assert windowed_ser(sent, decoded, 0, 11) == []

    def test_rejects_empty_window(self):
        with pytest.raises(InputDomainError):
            windowed_ser([1], [1], 0, 0)

    def test_tracking_follows_a_dropped_symbol(self, rng):
        sent = rng.integers(0, 256, size=100)
        decoded = np.concatenate([sent[:50], sent[51:]])
        series, lags = tracked_windowed_ser(sent, decoded, 10)
        assert lags == [0] * 5 + [1] * 4
        assert series == [0.0] * 9

    def test_tracking_through_steady_drift(self, rng):
        # 400 ppm with n = 8: one decoded symbol lost every 2500
        sent = rng.integers(0, 256, size=200_000)
        decoded = np.delete(sent, np.arange(2499, len(sent), 2500))
        series, lags = tracked_windowed_ser(sent, decoded, 12_500)
        assert len(series) == 15
        assert max(series) < 0.001
        assert lags == sorted(lags)
        assert lags[-1] == 75

    def test_tracking_follows_duplicated_symbols(self, rng):
        sent = rng.integers(0, 256, size=20_000)
        decoded = np.insert(sent, np.arange(1000, len(sent), 1000), -1)
        series, lags = tracked_windowed_ser(sent, decoded, 500, initial_lag=0)
        assert max(series) <= 2 / 500
        assert lags[-1] < 0

    def test_untracked_score_degrades_after_slip(self, rng):
        sent = rng.integers(0, 256, size=100)
        decoded = np.concatenate([sent[:50], sent[51:]])
        series = windowed_ser(sent, decoded, 0, 10)
        assert series[:5] == [0.0] * 5
        assert min(series[5:]) > 0.5


class TestPeriodicity:

    def test_dominant_period_of_sine(self):
        series = 0.5 + 0.4 * np.sin(2 * np.pi * np.arange(64) / 8)
        assert dominant_period(series) == 8

    def test_flat_or_short_series(self):
        assert dominant_period([0.1] * 40) is None
        assert dominant_period([0.1, 0.2, 0.3]) is None

    def test_predicted_period(self):
        assert predicted_period_windows(StreamChannelParams(drift_ppm=100.0), 1000) == pytest.approx(10.0)
        assert predicted_period_windows(StreamChannelParams(drift_ppm=-100.0), 500) == pytest.approx(20.0)
        assert predicted_period_windows(StreamChannelParams(), 1000) is None

    def test_window_symbols(self):
        assert window_symbols_for(200.0, 1e6, ModelConfig(k=8, n=8)) == 12_500
        assert window_symbols_for(0.001, 1e6, ModelConfig(k=8, n=8)) == 1

    def test_stream_window_spans_slip_cycle(self):
        cfg = ModelConfig(k=8, n=8)
        drifting = StreamChannelParams(drift_ppm=400.0)
        window = stream_window_symbols(200.0, 1e6, cfg, drifting)
        assert window == 625
        assert predicted_period_windows(drifting, window) == pytest.approx(4.0)
        assert stream_window_symbols(200.0, 1e6, cfg, StreamChannelParams()) == 12_500

    def test_rates(self):
        assert nominal_bit_rate(ModelConfig(k=8, n=8), 1e6) == pytest.approx(5e5)
        assert expected_decoded_difference(10, 8) == 2
        assert expected_decoded_difference(0, 8) == 1


class TestThroughput:

    def test_counts_windows(self, tiny_model, rng):
        stream = tx_stream(tiny_model.encoder, rng.integers(0, 4, size=40))
        result = measure_throughput(tiny_model.decoder, stream)
        assert result.windows == 39
        assert result.bits_per_second > 0

    def test_empty_stream(self, tiny_model):
        result = measure_throughput(tiny_model.decoder, np.zeros(0, np.complex64), duration=1.0)
        assert result.windows == 0
        assert result.bits_per_second == 0.0


class TestIqFiles:

    def test_write_then_read(self, tmp_path, tiny_model):
        stream = tx_stream(tiny_model.encoder, [0, 1, 2, 3], sample_rate=2e6)
        path = write_iq(tmp_path / "tx.iq", stream, start_offset=3)
        assert path.stat().st_size == len(stream) * 8

        loaded = read_iq(path)
        assert loaded.samples.tobytes() == stream.samples.tobytes()
        assert loaded.sample_rate == 2e6
        assert loaded.metadata["model"] == "AE-2/2-2"
        assert loaded.metadata["start_offset"] == 3
        assert loaded.metadata["format"] == "cf32_le"

    def test_explicit_rate_wins(self, tmp_path):
        path = write_iq(tmp_path / "x.iq", IqStream(np.ones(4, np.complex64), 1e6))
        assert read_iq(path, sample_rate=5e5).sample_rate == 5e5

    def test_missing_sidecar(self, tmp_path):
        path = tmp_path / "raw.iq"
        np.ones(3, dtype="<c8").tofile(path)
        loaded = read_iq(path)
        assert len(loaded) == 3
        assert loaded.metadata == {}

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "bad.iq"
        path.write_bytes(b"\x00" * 12)
        with pytest.raises(StructuralError):
            read_iq(path)

    def test_malformed_sidecar(self, tmp_path):
        path = tmp_path / "y.iq"
        np.ones(1, dtype="<c8").tofile(path)
        (tmp_path / "y.iq.meta").write_text("no separator here\n")
        with pytest.raises(StructuralError):
            read_meta(path)
