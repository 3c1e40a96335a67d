"""
Result Files and Charts
=======================

Every CSV written by the tool starts with a schema line

    # ae-modem schema=sweep version=1

followed by a header row. Readers check both the schema name and version
and reject anything they do not know, so old result files fail loudly
instead of being misread.

Charts are SVG line plots (one line per model, optional BPSK theory
overlay) rendered with matplotlib. Rendering is deterministic: fixed hash
salt, no date metadata, fixed figure size.
"""

import csv
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.ticker import LogLocator  # noqa: E402

from core.trainer import bpsk_ser_theoretical  # noqa: E402
from exceptions import CsvSchemaError, ReportError  # noqa: E402
from models import (  # noqa: E402
    GradCheckResult,
    LayerRow,
    ReportAxis,
    ReportSpec,
    StreamReport,
    SweepRecord,
    TrainLog,
    TrainLogRecord,
)


logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SVG_HASH_SALT = "ae-modem"
BPSK_LABEL = "BPSK (theory)"

_SCHEMA_LINE = re.compile(r"^#\s*ae-modem schema=(?P<name>[\w-]+) version=(?P<version>\d+)\s*$")

SCHEMAS: dict[str, list[str]] = {
    "sweep": ["model", "es_n0_db", "eb_n0_db", "amplitude", "symbols", "errors", "ser"],
    "trainlog": ["step", "loss", "accuracy"],
    "windowed_ser": ["model", "window", "window_symbols", "ser", "lag"],
    "stream_report": [
        "model", "symbols_sent", "symbols_decoded", "symbol_errors", "ser", "alignment_lag",
        "window_symbols", "windows", "slips", "predicted_period_windows", "dominant_period_windows",
    ],
    "symbols": ["index", "symbol"],
    "gradcheck": ["layer", "kind", "instances", "checked", "excluded", "max_rel_error", "passed"],
    "layout": ["section", "layer", "kind", "parameters", "output_shape"],
    "merged": ["series", "axis", "x", "ser"],
}

PathLike = Union[str, Path]


# =============================================================================
# Generic versioned CSV
# =============================================================================

def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: PathLike, schema: str, rows: Iterable[dict[str, Any]]) -> Path:
    if schema not in SCHEMAS:
        raise CsvSchemaError(str(path), f"unknown schema {schema!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = SCHEMAS[schema]
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# ae-modem schema={schema} version={SCHEMA_VERSION}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(column)) for column in columns])
    logger.debug(f"Wrote {schema} CSV {path}")
    return path


def read_csv(path: PathLike, schema: Optional[str] = None) -> tuple[str, list[dict[str, str]]]:
    """
    Read a versioned CSV.

    Args:
        path: File to read
        schema: Required schema name, or None to accept any known schema

    Returns:
        (schema name, rows as column -> text dicts)
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as f:
            first = f.readline()
            match = _SCHEMA_LINE.match(first.strip())
            if not match:
                raise CsvSchemaError(str(path), "missing schema line")
            name, version = match.group("name"), int(match.group("version"))
            if name not in SCHEMAS:
                raise CsvSchemaError(str(path), f"unknown schema {name!r}")
            if version != SCHEMA_VERSION:
                raise CsvSchemaError(str(path), f"unsupported {name} schema version {version}")
            if schema is not None and name != schema:
                raise CsvSchemaError(str(path), f"expected schema {schema!r}, found {name!r}")
            reader = csv.DictReader(f)
            missing = [c for c in SCHEMAS[name] if c not in (reader.fieldnames or [])]
            if missing:
                raise CsvSchemaError(str(path), f"missing columns {missing}")
            rows = list(reader)
    except OSError as e:
        raise CsvSchemaError(str(path), f"cannot read: {e}") from e
    return name, rows


def _opt_float(text: str) -> Optional[float]:
    return float(text) if text not in ("", None) else None


# =============================================================================
# Typed files
# =============================================================================

def write_sweep_csv(path: PathLike, records: Sequence[SweepRecord]) -> Path:
    return write_csv(path, "sweep", (
        {
            "model": r.model,
            "es_n0_db": r.es_n0_db,
            "eb_n0_db": r.eb_n0_db,
            "amplitude": r.amplitude,
            "symbols": r.symbols_sent,
            "errors": r.symbol_errors,
            "ser": r.ser,
        }
        for r in records
    ))


def read_sweep_csv(path: PathLike) -> list[SweepRecord]:
    _, rows = read_csv(path, "sweep")
    try:
        return [
            SweepRecord(
                model=row["model"],
                es_n0_db=_opt_float(row["es_n0_db"]),
                eb_n0_db=_opt_float(row["eb_n0_db"]),
                amplitude=_opt_float(row["amplitude"]),
                symbols_sent=int(row["symbols"]),
                symbol_errors=int(row["errors"]),
                ser=float(row["ser"]),
            )
            for row in rows
        ]
    except ValueError as e:
        raise CsvSchemaError(str(path), f"bad sweep row: {e}") from e


def write_trainlog_csv(path: PathLike, log: TrainLog) -> Path:
    return write_csv(path, "trainlog", (r.model_dump() for r in log.records))


def read_trainlog_csv(path: PathLike) -> TrainLog:
    _, rows = read_csv(path, "trainlog")
    return TrainLog(records=[
        TrainLogRecord(step=int(row["step"]), loss=float(row["loss"]), accuracy=float(row["accuracy"]))
        for row in rows
    ])


def write_windowed_ser_csv(
    path: PathLike,
    model: str,
    series: Sequence[float],
    window_symbols: int,
    lags: Optional[Sequence[int]] = None,
) -> Path:
    return write_csv(path, "windowed_ser", (
        {
            "model": model,
            "window": index,
            "window_symbols": window_symbols,
            "ser": float(value),
            "lag": None if lags is None else int(lags[index]),
        }
        for index, value in enumerate(series)
    ))


def write_stream_report_csv(path: PathLike, report: StreamReport) -> Path:
    row = report.model_dump(exclude={"windowed_ser", "throughput_bps"})
    row["windows"] = len(report.windowed_ser)
    return write_csv(path, "stream_report", [row])


def write_symbols_csv(path: PathLike, symbols: Sequence[int]) -> Path:
    return write_csv(path, "symbols", ({"index": i, "symbol": int(s)} for i, s in enumerate(symbols)))


def read_symbols_csv(path: PathLike) -> np.ndarray:
    _, rows = read_csv(path, "symbols")
    return np.asarray([int(row["symbol"]) for row in rows], dtype=np.int64)


def write_gradcheck_csv(path: PathLike, results: Sequence[GradCheckResult]) -> Path:
    return write_csv(path, "gradcheck", (r.model_dump() for r in results))


def write_layout_csv(path: PathLike, rows: Sequence[LayerRow]) -> Path:
    return write_csv(path, "layout", (
        {
            "section": r.section,
            "layer": r.name,
            "kind": r.kind,
            "parameters": r.parameters,
            "output_shape": "x".join(str(d) for d in r.output_shape),
        }
        for r in rows
    ))


def format_layout(rows: Sequence[LayerRow]) -> str:
    """Plain-text architecture table with per-section parameter totals."""
    lines = [f"{'Section':<10} {'Layer':<20} {'Parameters':>10}  Output"]
    section = None
    totals: dict[str, int] = {}
    for r in rows:
        if r.section != section:
            section = r.section
            lines.append("-" * 56)
        totals[r.section] = totals.get(r.section, 0) + r.parameters
        shape = " x ".join(str(d) for d in r.output_shape)
        lines.append(f"{r.section:<10} {r.name:<20} {r.parameters:>10}  {shape}")
    lines.append("-" * 56)
    for name, total in totals.items():
        if total:
            lines.append(f"{name + ' total':<31} {total:>10}")
    return "\n".join(lines)


# =============================================================================
# Charts
# =============================================================================

@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


@dataclass
class ChartResult:
    svg_path: Path
    merged_csv_path: Path
    series: list[Series]


_AXIS_COLUMN = {
    ReportAxis.EB_N0: "eb_n0_db",
    ReportAxis.ES_N0: "es_n0_db",
    ReportAxis.AMPLITUDE: "amplitude",
    ReportAxis.WINDOW: "window",
}

_AXIS_LABEL = {
    ReportAxis.EB_N0: "E_b/N_0 [dB]",
    ReportAxis.ES_N0: "E_sample/N_0 [dB]",
    ReportAxis.AMPLITUDE: "relative amplitude a",
    ReportAxis.WINDOW: "window index",
}


def load_series(spec: ReportSpec) -> list[Series]:
    """
    One series per model across all inputs, sorted along the x axis.

    Raises:
        ReportError: empty input, or the axis column is missing/blank
    """
    expected_schema = "windowed_ser" if spec.axis == ReportAxis.WINDOW else "sweep"
    column = _AXIS_COLUMN[spec.axis]
    points: dict[str, list[tuple[float, float]]] = {}
    for path in spec.inputs:
        name, rows = read_csv(path)
        if name != expected_schema:
            raise ReportError(f"axis {spec.axis.value} needs {expected_schema} files, {path} is {name}", spec.inputs)
        if not rows:
            raise ReportError(f"{path} has no data rows", spec.inputs)
        for row in rows:
            if row.get(column, "") == "":
                raise ReportError(f"{path} has no {column} values for axis {spec.axis.value}", spec.inputs)
            points.setdefault(row["model"], []).append((float(row[column]), float(row["ser"])))

    series = []
    for label in sorted(points):
        pairs = sorted(points[label])
        series.append(Series(label, np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])))
    return series


def bpsk_series(axis: ReportAxis, series: Sequence[Series], points: int = 61) -> Optional[Series]:
    """Theory curve over the plotted SNR range; E_b = E_sample on the per-sample axis."""
    if axis not in (ReportAxis.EB_N0, ReportAxis.ES_N0) or not series:
        return None
    lo = min(float(s.x.min()) for s in series)
    hi = max(float(s.x.max()) for s in series)
    x = np.linspace(lo, hi, points) if hi > lo else np.array([lo])
    return Series(BPSK_LABEL, x, bpsk_ser_theoretical(x))


def render_chart(
    spec: ReportSpec,
    svg_path: PathLike,
    merged_csv_path: PathLike,
    width_px: int = 800,
    height_px: int = 600,
) -> ChartResult:
    """Write the SVG chart and the merged CSV of all plotted points."""
    series = load_series(spec)
    if spec.bpsk_overlay:
        overlay = bpsk_series(spec.axis, series)
        if overlay is not None:
            series.append(overlay)
        else:
            logger.warning(f"BPSK overlay not defined for axis {spec.axis.value}; skipped")

    plt.rcParams["svg.hashsalt"] = SVG_HASH_SALT
    fig, ax = plt.subplots(figsize=(width_px / 72.0, height_px / 72.0), dpi=72)
    try:
        for s in series:
            style = {"linestyle": "--", "color": "black"} if s.label == BPSK_LABEL else {"marker": "o"}
            ax.plot(s.x, s.y, label=s.label, **style)
        if spec.log_scale:
            ax.set_yscale("log", nonpositive="mask")
            ax.yaxis.set_major_locator(LogLocator(base=10.0))
        ax.grid(True, which="major", linestyle=":")
        ax.set_xlabel(_AXIS_LABEL[spec.axis])
        ax.set_ylabel("SER")
        if spec.title:
            ax.set_title(spec.title)
        ax.legend()
        fig.tight_layout()
        svg_path = Path(svg_path)
        svg_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)

    merged_rows = (
        {"series": s.label, "axis": spec.axis.value, "x": float(x), "ser": float(y)}
        for s in series
        for x, y in zip(s.x, s.y)
    )
    merged = write_csv(merged_csv_path, "merged", merged_rows)
    logger.info(f"Chart with {len(series)} lines written to {svg_path}")
    return ChartResult(svg_path=svg_path, merged_csv_path=merged, series=series)
