"""
Command Line Interface for AE-Modem
===================================

Train, evaluate and stream learned autoencoder transceivers from the shell.

Usage:
------
    # Train from a TOML config
    python cli.py train configs/ae_8_8.toml --out-dir runs/ae88

    # SER sweep of a trained bundle
    python cli.py sweep runs/ae88/AE-8_8.weights --snr 0 2 4 6 8

    # Streaming simulation with 400 ppm clock drift
    python cli.py streamsim runs/ae88/AE-8_8.weights --drift-ppm 400

    # Chart several sweeps with the BPSK baseline
    python cli.py report runs/*/AE-*_sweep.csv --axis eb_n0

    # Re-run anything from its manifest
    python cli.py replay runs/ae88/sweep.manifest.json --out-dir runs/replay

Exit codes:
-----------
    0 success, 1 configuration or input error, 2 training diverged,
    3 gradient verification failed, 130 interrupted
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Optional, TextIO

from config import get_settings, load_train_config, tomllib
from core.pipeline import ExperimentPipeline, RunOutcome
from exceptions import ConfigurationError, ModemError
from models import ReportAxis, RunStatus, StreamChannelParams


# ANSI escape codes; only emitted when the target stream is a terminal
ANSI = {
    "red": "\033[91m",
    "green": "\033[92m",
    "yellow": "\033[93m",
    "blue": "\033[94m",
    "cyan": "\033[96m",
}
RESET = "\033[0m"

STATUS_COLORS = {
    RunStatus.PENDING: "yellow",
    RunStatus.TRAINING: "blue",
    RunStatus.EVALUATING: "blue",
    RunStatus.STREAMING: "cyan",
    RunStatus.VERIFYING: "cyan",
    RunStatus.REPORTING: "cyan",
    RunStatus.COMPLETED: "green",
    RunStatus.FAILED: "red",
}

# exit code -> colour of the final message
EXIT_COLORS = {0: "green", 1: "yellow", 2: "red", 3: "red", 130: "yellow"}


def colorize(text: str, color: Optional[str], stream: Optional[TextIO] = None) -> str:
    """Wrap text in the named colour if `stream` (default stdout) is a terminal."""
    stream = stream or sys.stdout
    if color not in ANSI or not stream.isatty():
        return text
    return f"{ANSI[color]}{text}{RESET}"


def exit_color(code: int) -> str:
    return EXIT_COLORS.get(code, "red")


# =============================================================================
# Parser
# =============================================================================

def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Root seed (default from settings: 1)")
    common.add_argument("--out-dir", "-o", type=str, help="Artifact directory (default from settings)")
    common.add_argument("--config", "-c", type=str, help="TOML file with run parameters")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    common.add_argument("--quiet", "-q", action="store_true", help="Warnings and errors only")
    return common


def create_parser() -> argparse.ArgumentParser:
    """Build the parser with one subcommand per pipeline verb."""
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="ae-modem",
        description="Learned end-to-end wireless transceiver: training, evaluation and streaming",
        epilog="Example: python cli.py train configs/ae_8_8.toml --out-dir runs/ae88",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="Train a model from a TOML config")
    p.add_argument("train_config", nargs="?", help="Training config (same as --config)")
    p.add_argument("--resume", action="store_true", help="Continue from the latest checkpoint in --out-dir")
    p.add_argument("--steps", type=int, help="Override total_steps")

    p = sub.add_parser("sweep", parents=[common], help="SER versus SNR (or amplitude)")
    p.add_argument("bundle", help="Weight bundle (.weights)")
    p.add_argument("--snr", type=float, nargs="+", default=[], help="E_sample/N_0 points in dB")
    p.add_argument("--eb-snr", type=float, nargs="+", default=[],
                   help="E_b/N_0 points in dB, converted with the bundle's k/n")
    p.add_argument("--num-symbols", type=int, help="Symbols per point (default 1e6)")
    p.add_argument("--a-min", type=float, help="Lower bound of the attenuation draw")
    p.add_argument("--amplitudes", type=float, nargs="+", help="Sweep fixed amplitudes instead of SNR")
    p.add_argument("--amplitude-snr", type=float, help="E_sample/N_0 for the amplitude sweep (default: no noise)")

    p = sub.add_parser("eval", parents=[common], help="SER at one operating point")
    p.add_argument("bundle")
    p.add_argument("--snr", type=float, help="E_sample/N_0 in dB (default: no noise)")
    p.add_argument("--num-symbols", type=int)
    p.add_argument("--a-min", type=float)
    p.add_argument("--phase", type=float, help="Pin the phase rotation (radians)")
    p.add_argument("--attenuation", type=float, help="Pin the attenuation")
    p.add_argument("--offset", type=int, help="Pin the window offset")

    p = sub.add_parser("streamsim", parents=[common], help="tx -> stream channel -> rx simulation")
    p.add_argument("bundle")
    p.add_argument("--num-symbols", type=int, default=100_000)
    p.add_argument("--snr", type=float, help="E_sample/N_0 in dB")
    p.add_argument("--attenuation", type=float, help="Fixed (or starting) amplitude")
    p.add_argument("--attenuation-walk", type=float)
    p.add_argument("--phase-walk", type=float, help="Per-sample phase random-walk std-dev")
    p.add_argument("--initial-phase", type=float)
    p.add_argument("--drift-ppm", type=float)
    p.add_argument("--start-offset", type=int, default=0)
    p.add_argument("--window-symbols", type=int,
                   help="Symbols per SER window (default: ser_window_ms of stream time, "
                        "shortened under drift so a slip cycle spans 4 windows)")
    p.add_argument("--sample-rate", type=float)

    p = sub.add_parser("gradcheck", parents=[common], help="Finite-difference gradient verification")
    p.add_argument("--model", default="AE-8/8", help="Model for the composite check")
    p.add_argument("--instances", type=int)
    p.add_argument("--no-composite", action="store_true")

    p = sub.add_parser("report", parents=[common], help="SVG chart and merged CSV from result CSVs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--axis", choices=[a.value for a in ReportAxis], default=ReportAxis.EB_N0.value)
    p.add_argument("--linear", action="store_true", help="Linear SER axis")
    p.add_argument("--no-bpsk", action="store_true", help="No BPSK theory overlay")
    p.add_argument("--title")
    p.add_argument("--name", default="report", help="Output file stem")

    p = sub.add_parser("tx", parents=[common], help="Encode symbols to an IQ file")
    p.add_argument("bundle")
    p.add_argument("--symbols", help="Symbols CSV (default: random symbols)")
    p.add_argument("--num-symbols", type=int, default=10_000)
    p.add_argument("--sample-rate", type=float)

    p = sub.add_parser("rx", parents=[common], help="Decode an IQ file")
    p.add_argument("bundle")
    p.add_argument("iq_file")
    p.add_argument("--start-offset", type=int, default=0)
    p.add_argument("--reference", help="Sent symbols CSV to score against")
    p.add_argument("--window-symbols", type=int)
    p.add_argument("--max-lag", type=int, default=8)
    p.add_argument("--tracked", action="store_true", help="Re-align every window (clock drift)")

    p = sub.add_parser("describe", parents=[common], help="Print the layer table of a model")
    p.add_argument("model", nargs="?", default="AE-8/8")

    p = sub.add_parser("replay", parents=[common], help="Re-run a command from its manifest")
    p.add_argument("manifest")

    return parser


def setup_logging_for_cli(verbose: bool, quiet: bool) -> None:
    """Configure logging based on CLI flags and settings."""
    settings = get_settings()
    if quiet:
        level = logging.WARNING
    elif verbose:
        level = logging.DEBUG
    else:
        level = getattr(logging, settings.log_level.upper(), logging.INFO)

    logging.basicConfig(level=level, format=settings.log_format)


def progress_callback(status: RunStatus, message: str, percent: int) -> None:
    """Print pipeline progress lines."""
    status_str = f"[{status.value.upper():^12}]"
    print(f"{colorize(status_str, STATUS_COLORS.get(status))} {percent:3d}% {message}")


# =============================================================================
# Verb handlers
# =============================================================================

def _read_toml_table(path: Optional[str], table: str) -> dict[str, Any]:
    """One table of an optional TOML file; a file without tables counts as the table itself."""
    if not path:
        return {}
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigurationError(path, "config file not found")
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(path, f"invalid TOML: {e}")
    return dict(data.get(table, data))


def _pick(flags: dict[str, Any], table: dict[str, Any], key: str, flag: str) -> Optional[Any]:
    value = flags.get(flag)
    return value if value is not None else table.get(key)


def _eb_points(bundle: str, eb_points: list[float]) -> list[float]:
    if not eb_points:
        return []
    from core.channel import eb_to_es
    from core.weights import read_bundle

    cfg = read_bundle(bundle).config
    return [eb_to_es(eb, cfg.k, cfg.n) for eb in eb_points]


def run_command(pipeline: ExperimentPipeline, args: argparse.Namespace, out_dir: str) -> RunOutcome:
    command = args.command
    flags = vars(args)

    if command == "train":
        path = args.train_config or args.config
        if not path:
            raise ConfigurationError("config", "train needs a TOML config file")
        config = load_train_config(path, settings=pipeline.settings)
        update = {}
        if args.seed is not None:
            update["seed"] = args.seed
        if args.steps is not None:
            update["total_steps"] = args.steps
        if update:
            config = config.model_copy(update=update)
        return pipeline.run_train(config, out_dir=out_dir, resume=args.resume)

    if command == "sweep":
        table = _read_toml_table(args.config, "sweep")
        points = list(args.snr or table.get("snr", [])) + _eb_points(args.bundle, args.eb_snr)
        return pipeline.run_sweep(
            args.bundle,
            points,
            out_dir=out_dir,
            num_symbols=_pick(flags, table, "num_symbols", "num_symbols"),
            seed=args.seed,
            a_min=_pick(flags, table, "a_min", "a_min"),
            amplitudes=_pick(flags, table, "amplitudes", "amplitudes"),
            amplitude_es_n0_db=_pick(flags, table, "amplitude_snr", "amplitude_snr"),
        )

    if command == "eval":
        table = _read_toml_table(args.config, "eval")
        return pipeline.run_eval(
            args.bundle,
            out_dir=out_dir,
            es_n0_db=_pick(flags, table, "es_n0_db", "snr"),
            num_symbols=_pick(flags, table, "num_symbols", "num_symbols"),
            seed=args.seed,
            a_min=_pick(flags, table, "a_min", "a_min"),
            fixed_phase=_pick(flags, table, "fixed_phase", "phase"),
            fixed_attenuation=_pick(flags, table, "fixed_attenuation", "attenuation"),
            fixed_offset=_pick(flags, table, "fixed_offset", "offset"),
        )

    if command == "streamsim":
        stream = _read_toml_table(args.config, "stream")
        overrides = {
            "es_n0_db": args.snr,
            "attenuation": args.attenuation,
            "attenuation_walk": args.attenuation_walk,
            "phase_walk_step": args.phase_walk,
            "initial_phase": args.initial_phase,
            "drift_ppm": args.drift_ppm,
        }
        stream.update({k: v for k, v in overrides.items() if v is not None})
        try:
            params = StreamChannelParams(**stream)
        except ValueError as e:
            raise ConfigurationError("stream", str(e))
        return pipeline.run_streamsim(
            args.bundle,
            out_dir=out_dir,
            num_symbols=args.num_symbols,
            stream=params,
            start_offset=args.start_offset,
            window_symbols=args.window_symbols,
            seed=args.seed,
            sample_rate=args.sample_rate,
        )

    if command == "gradcheck":
        return pipeline.run_gradcheck(
            args.model, out_dir=out_dir, seed=args.seed, instances=args.instances,
            include_composite=not args.no_composite,
        )

    if command == "report":
        return pipeline.run_report(
            args.inputs, out_dir=out_dir, axis=args.axis, log_scale=not args.linear,
            bpsk_overlay=not args.no_bpsk, title=args.title, name=args.name,
        )

    if command == "tx":
        return pipeline.run_tx(
            args.bundle, out_dir=out_dir, symbols_file=args.symbols, num_symbols=args.num_symbols,
            seed=args.seed, sample_rate=args.sample_rate,
        )

    if command == "rx":
        return pipeline.run_rx(
            args.bundle, args.iq_file, out_dir=out_dir, start_offset=args.start_offset,
            reference=args.reference, window_symbols=args.window_symbols, max_lag=args.max_lag,
            tracked=args.tracked,
        )

    if command == "describe":
        return pipeline.run_describe(args.model, out_dir=out_dir)

    if command == "replay":
        return pipeline.replay(args.manifest, out_dir=out_dir)

    raise ConfigurationError("command", f"unknown command {command!r}")


def print_outcome(outcome: RunOutcome, quiet: bool) -> None:
    manifest = outcome.manifest
    if manifest.command == "describe":
        print(outcome.result)
    if quiet:
        return
    if manifest.metrics:
        for key, value in manifest.metrics.items():
            print(f"   {key}: {value}")
    print(colorize(f"\nArtifacts ({manifest.command}):", STATUS_COLORS.get(manifest.status)))
    for name, path in outcome.artifacts.items():
        print(f"   • {name}: {path}")


def main(args: Optional[list[str]] = None) -> int:
    """
    Main entry point for the CLI.

    Args:
        args: Command line arguments (uses sys.argv if None)

    Returns:
        Exit code (see module docstring)
    """
    parser = create_parser()
    parsed_args = parser.parse_args(args)
    setup_logging_for_cli(parsed_args.verbose, parsed_args.quiet)

    try:
        settings = get_settings()
        out_dir = parsed_args.out_dir or str(Path(settings.output_dir) / parsed_args.command)
        callback = None if parsed_args.quiet else progress_callback
        pipeline = ExperimentPipeline(settings=settings, progress_callback=callback)

        outcome = run_command(pipeline, parsed_args, out_dir)
        print_outcome(outcome, parsed_args.quiet)

        if not parsed_args.quiet:
            print(colorize("\nDone.\n", exit_color(0)))
        return 0

    except ModemError as e:
        print(colorize(f"\nError: {e.message}", exit_color(e.exit_code), sys.stderr), file=sys.stderr)
        if parsed_args.verbose and e.details:
            print(colorize(f"   Details: {e.details}", exit_color(e.exit_code), sys.stderr), file=sys.stderr)
        return e.exit_code

    except KeyboardInterrupt:
        print(colorize("\n\nInterrupted by user", exit_color(130), sys.stderr), file=sys.stderr)
        return 130

    except Exception as e:
        print(colorize(f"\nUnexpected error: {e}", "red", sys.stderr), file=sys.stderr)
        if parsed_args.verbose:
            import traceback
            traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
