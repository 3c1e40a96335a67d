"""
Experiment Pipeline for AE-Modem
================================

This module is the orchestration layer behind every CLI verb. Each
``run_*`` method resolves its inputs, calls into the core modules, writes
its artifacts and records a :class:`models.RunManifest` next to them.

Architecture Pattern: Pipeline
------------------------------
Every run goes through the same envelope:

1. Build a manifest holding the fully resolved arguments
2. Run the stage(s), reporting progress through an optional callback
3. Mark the manifest completed (or failed, with the error) and save it

Because the manifest stores the exact arguments, :meth:`replay` can call
the same method again and reproduce every output file.

Our Stages:
TOML config -> [train] -> weights -> [sweep | eval | streamsim | tx/rx] -> CSV -> [report] -> SVG
"""

import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Union

from config import Settings, get_settings
from core.channel import RngStream, slip_positions, stream_channel
from core.gradcheck import run_gradcheck, verify
from core.modem import Autoencoder, build_decoder, build_encoder
from core.report import (
    format_layout,
    read_symbols_csv,
    render_chart,
    write_gradcheck_csv,
    write_layout_csv,
    write_stream_report_csv,
    write_sweep_csv,
    write_symbols_csv,
    write_trainlog_csv,
    write_windowed_ser_csv,
)
from core.runtime import (
    TRACK_CHUNK_SYMBOLS,
    IqStream,
    align_sequences,
    dominant_period,
    expected_decoded_difference,
    measure_throughput,
    nominal_bit_rate,
    predicted_period_windows,
    read_iq,
    rx_stream,
    stream_window_symbols,
    tracked_windowed_ser,
    tx_stream,
    window_symbols_for,
    windowed_ser,
    write_iq,
)
from core.trainer import evaluate_ser, sweep_amplitude, sweep_snr, train
from core.weights import bundle_path, load_weights, save_weights
from exceptions import ConfigurationError, ModemError
from models import (
    ChannelParams,
    ModelConfig,
    ReportAxis,
    ReportSpec,
    RunManifest,
    RunStatus,
    StreamChannelParams,
    StreamReport,
    TrainConfig,
)


logger = logging.getLogger(__name__)

ProgressCallback = Callable[[RunStatus, str, int], None]

PathLike = Union[str, Path]


@dataclass
class RunOutcome:
    """What a pipeline run produced: its manifest, artifacts and in-memory results."""
    manifest: RunManifest
    artifacts: dict[str, Path] = field(default_factory=dict)
    result: Any = None


def _jsonable(value: Any) -> Any:
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    return value


def dedupe_preserving_order(values: Sequence[float]) -> list[float]:
    seen: set[float] = set()
    unique = []
    for value in values:
        if value in seen:
            logger.warning(f"Duplicate SNR point {value} dB dropped")
            continue
        seen.add(value)
        unique.append(value)
    return unique


def model_from_name(name: str) -> ModelConfig:
    try:
        return ModelConfig.from_name(name)
    except ValueError as e:
        raise ConfigurationError("model", str(e)) from e


@dataclass
class StreamScore:
    lag: int
    errors: int
    ser: Optional[float]
    series: list[float]
    lags: Optional[list[int]] = None


def score_stream(
    sent,
    decoded,
    window_symbols: int,
    tracked: bool,
    max_lag: int,
    slip_period: Optional[int] = None,
) -> StreamScore:
    """
    Align decoded against sent symbols and compute the windowed SER.

    Untracked: one global lag, totals over the whole overlap. Tracked: the
    starting lag comes from the first chunk only and the lag is followed
    chunk by chunk; the search widens when slips (one lag step per
    `slip_period` symbols) come faster than one per chunk. Totals cover
    the scored windows.
    """
    if not tracked:
        alignment = align_sequences(sent, decoded, max_lag)
        series = windowed_ser(sent, decoded, alignment.lag, window_symbols)
        errors = alignment.overlap - alignment.matches
        return StreamScore(alignment.lag, errors, alignment.ser, series)

    chunk = min(window_symbols, TRACK_CHUNK_SYMBOLS)
    search = 2 + (chunk // slip_period if slip_period else 0)
    head = min(len(decoded), chunk)
    start = align_sequences(sent[:head + max_lag], decoded[:head], max_lag)
    series, lags = tracked_windowed_ser(
        sent, decoded, window_symbols, initial_lag=start.lag, search=search, chunk_symbols=chunk,
    )
    errors = int(round(sum(series) * window_symbols))
    scored = len(series) * window_symbols
    return StreamScore(start.lag, errors, errors / scored if scored else None, series, lags)


class ExperimentPipeline:
    """
    Runs training, evaluation, streaming and reporting jobs.

    Usage:
        pipeline = ExperimentPipeline()
        outcome = pipeline.run_train("configs/ae_8_8.toml", out_dir="runs/ae88")
        pipeline.run_sweep(outcome.artifacts["weights"], [0, 2, 4], out_dir="runs/ae88")
    """

    def __init__(
        self,
        settings: Optional[Settings] = None,
        progress_callback: Optional[ProgressCallback] = None,
    ):
        self.settings = settings or get_settings()
        self.progress_callback = progress_callback

    # =========================================================================
    # Run envelope
    # =========================================================================

    def _notify_progress(self, status: RunStatus, message: str, progress: int = 0) -> None:
        """Call the progress callback; its failures are logged, never raised."""
        if self.progress_callback:
            try:
                self.progress_callback(status, message, progress)
            except Exception as e:
                logger.warning(f"Progress callback failed: {e}")

    def _execute(
        self,
        command: str,
        config: dict[str, Any],
        out_dir: PathLike,
        seed: Optional[int],
        stage: RunStatus,
        body: Callable[[Path, RunManifest], RunOutcome],
    ) -> RunOutcome:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(
            command=command,
            config=_jsonable(config),
            seed=seed,
            status=RunStatus.PENDING,
            started_at=datetime.now(),
        )
        logger.info(f"[{command}] starting, output in {out}")
        self._notify_progress(stage, f"{command} started", 0)
        manifest.status = stage

        try:
            outcome = body(out, manifest)
        except ModemError as e:
            manifest.status = RunStatus.FAILED
            manifest.error = e.to_dict()
            manifest.finished_at = datetime.now()
            save_manifest(manifest, out)
            self._notify_progress(RunStatus.FAILED, f"Error: {e.message}", 0)
            logger.error(f"[{command}] failed: {e.message}")
            raise

        manifest.artifacts = [str(path) for path in outcome.artifacts.values()]
        manifest.status = RunStatus.COMPLETED
        manifest.finished_at = datetime.now()
        save_manifest(manifest, out)
        outcome.manifest = manifest
        self._notify_progress(RunStatus.COMPLETED, f"{command} complete", 100)
        logger.info(f"[{command}] complete: {len(outcome.artifacts)} artifacts")
        return outcome

    def _load_model(self, bundle: PathLike) -> Autoencoder:
        model, _ = load_weights(bundle)
        return model

    # =========================================================================
    # Training
    # =========================================================================

    def run_train(
        self,
        train_config: Union[TrainConfig, dict],
        out_dir: PathLike,
        resume: bool = False,
    ) -> RunOutcome:
        """Train a model; writes the weight bundle and the training log CSV."""
        config = train_config if isinstance(train_config, TrainConfig) else TrainConfig.model_validate(train_config)

        def body(out: Path, manifest: RunManifest) -> RunOutcome:
            def on_log(step: int, total: int, record) -> None:
                self._notify_progress(
                    RunStatus.TRAINING,
                    f"step {step}/{total} loss {record.loss:.4f} acc {record.accuracy:.3f}",
                    int(100 * step / total),
                )

            result = train(config, out_dir=out, resume=resume, progress=on_log)
            weights = save_weights(result.model, bundle_path(out, config.model), result.metadata)
            log_path = write_trainlog_csv(out / f"{config.model.file_stem}_trainlog.csv", result.log)
            last = result.log.records[-1] if result.log.records else None
            if last is not None:
                manifest.metrics.update({"final_loss": last.loss, "final_accuracy": last.accuracy})
            if result.resumed_from is not None:
                manifest.metrics["resumed_from"] = result.resumed_from
            return RunOutcome(manifest, {"weights": weights, "trainlog": log_path}, result)

        return self._execute(
            "train",
            {"train_config": config, "resume": resume},
            out_dir,
            config.seed,
            RunStatus.TRAINING,
            body,
        )

    # =========================================================================
    # Evaluation
    # =========================================================================

    def run_sweep(
        self,
        bundle: PathLike,
        es_n0_db: Sequence[float],
        out_dir: PathLike,
        num_symbols: Optional[int] = None,
        seed: Optional[int] = None,
        a_min: Optional[float] = None,
        amplitudes: Optional[Sequence[float]] = None,
        amplitude_es_n0_db: Optional[float] = None,
    ) -> RunOutcome:
        """
        SER versus SNR (or versus fixed amplitude when `amplitudes` is given)
        for one weight bundle.
        """
        s = self.settings
        num_symbols = num_symbols or s.sweep_num_symbols
        seed = s.default_seed if seed is None else seed
        a_min = s.eval_a_min if a_min is None else a_min
        points = dedupe_preserving_order([float(v) for v in es_n0_db])
        if not points and not amplitudes:
            raise ConfigurationError("snr", "at least one SNR point is required")
        options = {
            "chunk_symbols": s.eval_chunk_symbols,
            "batch_size": s.eval_batch_size,
            "workers": s.eval_workers,
        }

        def body(out: Path, manifest: RunManifest) -> RunOutcome:
            model = self._load_model(bundle)
            channel = ChannelParams(a_min=a_min)
            rng = RngStream(seed)
            if amplitudes:
                records = sweep_amplitude(model, amplitudes, amplitude_es_n0_db, num_symbols, rng,
                                          channel=channel, **options)
                path = out / f"{model.config.file_stem}_amplitude.csv"
            else:
                self._notify_progress(RunStatus.EVALUATING, f"{model.config.name}: {len(points)} SNR points", 10)
                records = sweep_snr(model, points, num_symbols, rng, channel=channel, **options)
                path = out / f"{model.config.file_stem}_sweep.csv"
            write_sweep_csv(path, records)
            return RunOutcome(manifest, {"sweep": path}, records)

        return self._execute(
            "sweep",
            {
                "bundle": str(bundle), "es_n0_db": points, "num_symbols": num_symbols, "seed": seed,
                "a_min": a_min, "amplitudes": list(amplitudes) if amplitudes else None,
                "amplitude_es_n0_db": amplitude_es_n0_db,
            },
            out_dir,
            seed,
            RunStatus.EVALUATING,
            body,
        )

    def run_eval(
        self,
        bundle: PathLike,
        out_dir: PathLike,
        es_n0_db: Optional[float] = None,
        num_symbols: Optional[int] = None,
        seed: Optional[int] = None,
        a_min: Optional[float] = None,
        fixed_phase: Optional[float] = None,
        fixed_attenuation: Optional[float] = None,
        fixed_offset: Optional[int] = None,
    ) -> RunOutcome:
        """Single SER point, with any of phase / attenuation / offset pinned."""
        s = self.settings
        num_symbols = num_symbols or s.sweep_num_symbols
        seed = s.default_seed if seed is None else seed
        channel = ChannelParams(
            es_n0_db=es_n0_db,
            a_min=s.eval_a_min if a_min is None else a_min,
            fixed_phase=fixed_phase,
            fixed_attenuation=fixed_attenuation,
            fixed_offset=fixed_offset,
        )

        def body(out: Path, manifest: RunManifest) -> RunOutcome:
            model = self._load_model(bundle)
            record = evaluate_ser(
                model, channel, num_symbols, RngStream(seed),
                chunk_symbols=s.eval_chunk_symbols, batch_size=s.eval_batch_size, workers=s.eval_workers,
            )
            path = write_sweep_csv(out / f"{model.config.file_stem}_eval.csv", [record])
            manifest.metrics["ser"] = record.ser
            return RunOutcome(manifest, {"eval": path}, record)

        return self._execute(
            "eval",
            {
                "bundle": str(bundle), "es_n0_db": es_n0_db, "num_symbols": num_symbols, "seed": seed,
                "a_min": channel.a_min, "fixed_phase": fixed_phase,
                "fixed_attenuation": fixed_attenuation, "fixed_offset": fixed_offset,
            },
            out_dir,
            seed,
            RunStatus.EVALUATING,
            body,
        )

    # =========================================================================
    # Streaming
    # =========================================================================

    def run_streamsim(
        self,
        bundle: PathLike,
        out_dir: PathLike,
        num_symbols: int = 100_000,
        stream: Optional[Union[StreamChannelParams, dict]] = None,
        start_offset: int = 0,
        window_symbols: Optional[int] = None,
        seed: Optional[int] = None,
        sample_rate: Optional[float] = None,
    ) -> RunOutcome:
        """
        tx -> stream channel -> rx over random symbols.

        Writes the sent and decoded symbols, both IQ recordings, the
        windowed SER series and the stream report.
        """
        s = self.settings
        seed = s.default_seed if seed is None else seed
        sample_rate = sample_rate or s.sample_rate
        params = stream if isinstance(stream, StreamChannelParams) else StreamChannelParams(**(stream or {}))

        def body(out: Path, manifest: RunManifest) -> RunOutcome:
            model = self._load_model(bundle)
            cfg = model.config
            rng = RngStream(seed)
            window = window_symbols or stream_window_symbols(s.ser_window_ms, sample_rate, cfg, params)
            predicted = predicted_period_windows(params, window)
            if predicted is not None and predicted < 2:
                logger.warning(
                    f"SER window of {window} symbols is longer than half a slip cycle "
                    f"({params.slip_period} symbols); the windowed SER cannot show the slip period"
                )
            sent = rng.child(0).generator.integers(0, cfg.M, size=num_symbols)

            self._notify_progress(RunStatus.STREAMING, "transmitting", 10)
            tx = tx_stream(model.encoder, sent, sample_rate)
            slips = len(slip_positions(len(tx), params))
            impaired = IqStream(stream_channel(tx.samples, params, rng.child(1)), sample_rate,
                                {"model": cfg.name, "drift_ppm": params.drift_ppm})

            self._notify_progress(RunStatus.STREAMING, "receiving", 40)
            decoded = rx_stream(model.decoder, impaired, start_offset, s.eval_batch_size)
            max_lag = 2 + expected_decoded_difference(slips, cfg.n) + math.ceil(start_offset / (2 * cfg.n))
            score = score_stream(sent, decoded, window, tracked=params.drift_ppm != 0, max_lag=max_lag,
                                 slip_period=params.slip_period)
            series, lags = score.series, score.lags
            report = StreamReport(
                model=cfg.name,
                symbols_sent=len(sent),
                symbols_decoded=len(decoded),
                symbol_errors=score.errors,
                ser=score.ser,
                alignment_lag=score.lag,
                window_symbols=window,
                windowed_ser=series,
                slips=slips,
                predicted_period_windows=predicted,
                dominant_period_windows=dominant_period(series),
            )

            throughput = measure_throughput(model.decoder, impaired, start_offset=start_offset)
            manifest.metrics.update({
                "throughput_bps": throughput.bits_per_second,
                "nominal_bps": nominal_bit_rate(cfg, sample_rate),
                "ser": report.ser,
                "dominant_period_windows": report.dominant_period_windows,
                "predicted_period_windows": report.predicted_period_windows,
            })

            artifacts = {
                "sent": write_symbols_csv(out / "sent_symbols.csv", sent),
                "tx_iq": write_iq(out / "tx.iq", tx),
                "rx_iq": write_iq(out / "rx.iq", impaired),
                "decoded": write_symbols_csv(out / "decoded_symbols.csv", decoded),
                "windowed_ser": write_windowed_ser_csv(out / "windowed_ser.csv", cfg.name, series, window, lags),
                "report": write_stream_report_csv(out / "stream_report.csv", report),
            }
            return RunOutcome(manifest, artifacts, report)

        return self._execute(
            "streamsim",
            {
                "bundle": str(bundle), "num_symbols": num_symbols, "stream": params,
                "start_offset": start_offset, "window_symbols": window_symbols, "seed": seed,
                "sample_rate": sample_rate,
            },
            out_dir,
            seed,
            RunStatus.STREAMING,
            body,
        )

    def run_tx(
        self,
        bundle: PathLike,
        out_dir: PathLike,
        symbols_file: Optional[PathLike] = None,
        num_symbols: int = 10_000,
        seed: Optional[int] = None,
        sample_rate: Optional[float] = None,
    ) -> RunOutcome:
        """Encode symbols (from a symbols CSV or drawn at random) into an IQ file."""
        seed = self.settings.default_seed if seed is None else seed
        sample_rate = sample_rate or self.settings.sample_rate

        def body(out: Path, manifest: RunManifest) -> RunOutcome:
            model = self._load_model(bundle)
            if symbols_file is not None:
                symbols = read_symbols_csv(symbols_file)
            else:
                symbols = RngStream(seed).child(0).generator.integers(0, model.config.M, size=num_symbols)
            iq = tx_stream(model.encoder, symbols, sample_rate)
            artifacts = {
                "sent": write_symbols_csv(out / "sent_symbols.csv", symbols),
                "tx_iq": write_iq(out / "tx.iq", iq),
            }
            return RunOutcome(manifest, artifacts, iq)

        return self._execute(
            "tx",
            {
                "bundle": str(bundle), "symbols_file": str(symbols_file) if symbols_file else None,
                "num_symbols": num_symbols, "seed": seed, "sample_rate": sample_rate,
            },
            out_dir,
            seed,
            RunStatus.STREAMING,
            body,
        )

    def run_rx(
        self,
        bundle: PathLike,
        iq_file: PathLike,
        out_dir: PathLike,
        start_offset: int = 0,
        reference: Optional[PathLike] = None,
        window_symbols: Optional[int] = None,
        max_lag: int = 8,
        tracked: bool = False,
    ) -> RunOutcome:
        """
        Decode an IQ file; with a reference symbols CSV also align and score it.
        `tracked` follows the lag chunk by chunk, for recordings with clock drift.
        """

        def body(out: Path, manifest: RunManifest) -> RunOutcome:
            model = self._load_model(bundle)
            cfg = model.config
            iq = read_iq(iq_file)
            decoded = rx_stream(model.decoder, iq, start_offset, self.settings.eval_batch_size)
            artifacts = {"decoded": write_symbols_csv(out / "decoded_symbols.csv", decoded)}
            result: Any = decoded
            if reference is not None:
                sent = read_symbols_csv(reference)
                window = window_symbols or window_symbols_for(self.settings.ser_window_ms, iq.sample_rate, cfg)
                score = score_stream(sent, decoded, window, tracked, max_lag)
                result = StreamReport(
                    model=cfg.name,
                    symbols_sent=len(sent),
                    symbols_decoded=len(decoded),
                    symbol_errors=score.errors,
                    ser=score.ser,
                    alignment_lag=score.lag,
                    window_symbols=window,
                    windowed_ser=score.series,
                    dominant_period_windows=dominant_period(score.series),
                )
                manifest.metrics["ser"] = score.ser
                artifacts["windowed_ser"] = write_windowed_ser_csv(
                    out / "windowed_ser.csv", cfg.name, score.series, window, score.lags
                )
                artifacts["report"] = write_stream_report_csv(out / "stream_report.csv", result)
            return RunOutcome(manifest, artifacts, result)

        return self._execute(
            "rx",
            {
                "bundle": str(bundle), "iq_file": str(iq_file), "start_offset": start_offset,
                "reference": str(reference) if reference else None,
                "window_symbols": window_symbols, "max_lag": max_lag, "tracked": tracked,
            },
            out_dir,
            None,
            RunStatus.STREAMING,
            body,
        )

    # =========================================================================
    # Verification, reports and architecture
    # =========================================================================

    def run_gradcheck(
        self,
        model: str,
        out_dir: PathLike,
        seed: Optional[int] = None,
        instances: Optional[int] = None,
        include_composite: bool = True,
    ) -> RunOutcome:
        """Finite-difference check of every layer kind; fails with VerificationFailedError."""
        s = self.settings
        seed = s.default_seed if seed is None else seed
        instances = instances or s.gradcheck_instances
        config = model_from_name(model)

        def body(out: Path, manifest: RunManifest) -> RunOutcome:
            results = run_gradcheck(
                config, seed=seed, instances=instances, eps=s.gradcheck_eps,
                tolerance=s.gradcheck_tolerance, include_composite=include_composite,
            )
            path = write_gradcheck_csv(out / "gradcheck.csv", results)
            manifest.artifacts = [str(path)]
            manifest.metrics["worst_rel_error"] = max(r.max_rel_error for r in results)
            verify(results)
            return RunOutcome(manifest, {"gradcheck": path}, results)

        return self._execute(
            "gradcheck",
            {"model": model, "seed": seed, "instances": instances, "include_composite": include_composite},
            out_dir,
            seed,
            RunStatus.VERIFYING,
            body,
        )

    def run_report(
        self,
        inputs: Sequence[PathLike],
        out_dir: PathLike,
        axis: Union[ReportAxis, str] = ReportAxis.EB_N0,
        log_scale: bool = True,
        bpsk_overlay: bool = True,
        title: Optional[str] = None,
        name: str = "report",
    ) -> RunOutcome:
        """SVG chart plus merged CSV from sweep or windowed-SER CSVs."""
        spec = ReportSpec(
            inputs=[str(p) for p in inputs], axis=ReportAxis(axis),
            log_scale=log_scale, bpsk_overlay=bpsk_overlay, title=title,
        )

        def body(out: Path, manifest: RunManifest) -> RunOutcome:
            chart = render_chart(
                spec, out / f"{name}.svg", out / f"{name}_merged.csv",
                self.settings.svg_width, self.settings.svg_height,
            )
            manifest.metrics["lines"] = len(chart.series)
            return RunOutcome(manifest, {"svg": chart.svg_path, "merged": chart.merged_csv_path}, chart)

        return self._execute(
            "report",
            {"inputs": spec.inputs, "axis": spec.axis.value, "log_scale": log_scale,
             "bpsk_overlay": bpsk_overlay, "title": title, "name": name},
            out_dir,
            None,
            RunStatus.REPORTING,
            body,
        )

    def run_describe(self, model: str, out_dir: PathLike) -> RunOutcome:
        """Architecture table (per-layer parameters and output shapes) for one config."""
        config = model_from_name(model)

        def body(out: Path, manifest: RunManifest) -> RunOutcome:
            net = Autoencoder(config, build_encoder(config), build_decoder(config))
            rows = net.layer_table()
            path = write_layout_csv(out / f"{config.file_stem}_layout.csv", rows)
            manifest.metrics.update({
                "encoder_parameters": net.encoder.parameter_count(),
                "decoder_parameters": net.decoder.parameter_count(),
            })
            return RunOutcome(manifest, {"layout": path}, format_layout(rows))

        return self._execute("describe", {"model": model}, out_dir, None, RunStatus.REPORTING, body)

    # =========================================================================
    # Replay
    # =========================================================================

    def replay(self, manifest_path: PathLike, out_dir: PathLike) -> RunOutcome:
        """Re-run the command recorded in a manifest into `out_dir`."""
        manifest = load_manifest(manifest_path)
        runners = {
            "train": self.run_train,
            "sweep": self.run_sweep,
            "eval": self.run_eval,
            "streamsim": self.run_streamsim,
            "tx": self.run_tx,
            "rx": self.run_rx,
            "gradcheck": self.run_gradcheck,
            "report": self.run_report,
            "describe": self.run_describe,
        }
        if manifest.command not in runners:
            raise ConfigurationError("command", f"manifest command {manifest.command!r} cannot be replayed")
        logger.info(f"Replaying {manifest.command} from {manifest_path}")
        return runners[manifest.command](out_dir=out_dir, **manifest.config)


# =============================================================================
# Manifest files
# =============================================================================

def manifest_path(out_dir: PathLike, command: str) -> Path:
    return Path(out_dir) / f"{command}.manifest.json"


def save_manifest(manifest: RunManifest, out_dir: PathLike) -> Path:
    path = manifest_path(out_dir, manifest.command)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest.model_dump(mode="json"), f, indent=2, default=str)
    logger.debug(f"Manifest written to {path}")
    return path


def load_manifest(path: PathLike) -> RunManifest:
    try:
        with open(path, encoding="utf-8") as f:
            return RunManifest.model_validate(json.load(f))
    except (OSError, ValueError) as e:
        raise ConfigurationError("manifest", f"cannot load {path}: {e}") from e


def create_pipeline(
    settings: Optional[Settings] = None,
    progress_callback: Optional[ProgressCallback] = None,
) -> ExperimentPipeline:
    """Factory used by the CLI and tests."""
    return ExperimentPipeline(settings=settings or get_settings(), progress_callback=progress_callback)
