"""Versioned CSV files, layout table and SVG charts."""

import pytest

from core.report import (
    BPSK_LABEL,
    format_layout,
    read_csv,
    read_symbols_csv,
    read_sweep_csv,
    read_trainlog_csv,
    render_chart,
    write_csv,
    write_layout_csv,
    write_stream_report_csv,
    write_sweep_csv,
    write_symbols_csv,
    write_trainlog_csv,
    write_windowed_ser_csv,
)
from exceptions import CsvSchemaError, ReportError
from models import LayerRow, ReportAxis, ReportSpec, StreamReport, SweepRecord, TrainLog, TrainLogRecord


def _sweep(path, model, points):
    records = [
        SweepRecord.from_counts(model, 1000, errors, es_n0_db=es, eb_n0_db=es + 1.0)
        for es, errors in points
    ]
    return write_sweep_csv(path, records)


class TestVersionedCsv:

    def test_schema_line_and_header(self, tmp_path):
        path = write_symbols_csv(tmp_path / "s.csv", [3, 1])
        lines = path.read_text().splitlines()
        assert lines[0] == "# ae-modem schema=symbols version=1"
        assert lines[1] == "index,symbol"
        assert read_symbols_csv(path).tolist() == [3, 1]

    def test_missing_schema_line(self, tmp_path):
        path = tmp_path / "plain.csv"
        path.write_text("index,symbol\n0,1\n")
        with pytest.raises(CsvSchemaError):
            read_csv(path)

    def test_unknown_schema(self, tmp_path):
        path = tmp_path / "odd.csv"
        path.write_text("# ae-modem schema=mystery version=1\na,b\n")
        with pytest.raises(CsvSchemaError):
            read_csv(path)
        with pytest.raises(CsvSchemaError):
            write_csv(path, "mystery", [])

    def test_future_version(self, tmp_path):
        path = tmp_path / "v2.csv"
        path.write_text("# ae-modem schema=symbols version=2\nindex,symbol\n")
        with pytest.raises(CsvSchemaError):
            read_csv(path)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "cols.csv"
        path.write_text("# ae-modem schema=trainlog version=1\nstep,loss\n1,0.5\n")
        with pytest.raises(CsvSchemaError):
            read_csv(path)

    def test_wrong_schema_for_reader(self, tmp_path):
        path = write_symbols_csv(tmp_path / "s.csv", [1])
        with pytest.raises(CsvSchemaError):
            read_sweep_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CsvSchemaError):
            read_csv(tmp_path / "absent.csv")


class TestTypedFiles:

    def test_sweep_round_trip(self, tmp_path):
        record = SweepRecord.from_counts("AE-8/8", 1000, 7, es_n0_db=2.5, eb_n0_db=2.5)
        loaded = read_sweep_csv(write_sweep_csv(tmp_path / "sweep.csv", [record]))
        assert loaded == [record]

    def test_trainlog_round_trip(self, tmp_path):
        log = TrainLog(records=[TrainLogRecord(step=10, loss=1.25, accuracy=0.5)])
        assert read_trainlog_csv(write_trainlog_csv(tmp_path / "log.csv", log)) == log

    def test_windowed_ser_rows(self, tmp_path):
        path = write_windowed_ser_csv(tmp_path / "w.csv", "AE-8/8", [0.1, 0.0], 100, lags=[0, 1])
        _, rows = read_csv(path, "windowed_ser")
        assert [(r["window"], r["ser"], r["lag"]) for r in rows] == [("0", "0.1", "0"), ("1", "0.0", "1")]

    def test_stream_report_counts_windows(self, tmp_path):
        report = StreamReport(model="AE-8/8", symbols_sent=10, symbols_decoded=9, window_symbols=3,
                              windowed_ser=[0.0, 0.5, 0.0], throughput_bps=12.0)
        _, rows = read_csv(write_stream_report_csv(tmp_path / "r.csv", report))
        assert rows[0]["windows"] == "3"
        assert rows[0]["symbol_errors"] == ""

    def test_layout(self, tmp_path):
        rows = [
            LayerRow(section="Encoder", name="Embedding", kind="embedding", parameters=16, output_shape=[4]),
            LayerRow(section="Decoder", name="Flatten", kind="flatten", parameters=0, output_shape=[3, 2]),
        ]
        _, csv_rows = read_csv(write_layout_csv(tmp_path / "l.csv", rows), "layout")
        assert csv_rows[1]["output_shape"] == "3x2"
        text = format_layout(rows)
        assert "Encoder total" in text
        assert "Decoder total" not in text


class TestCharts:

    def test_one_series_per_model_plus_theory(self, tmp_path):
        inputs = [
            str(_sweep(tmp_path / f"m{i}.csv", f"AE-{i + 4}/8", [(0.0, 300), (4.0, 30)]))
            for i in range(4)
        ]
        result = render_chart(ReportSpec(inputs=inputs), tmp_path / "chart.svg", tmp_path / "merged.csv")
        labels = [s.label for s in result.series]
        assert len(labels) == 5
        assert labels[-1] == BPSK_LABEL
        assert result.svg_path.read_text().lstrip().startswith("<?xml")
        _, merged = read_csv(result.merged_csv_path, "merged")
        assert {row["series"] for row in merged} == set(labels)

    def test_points_sorted_along_axis(self, tmp_path):
        path = _sweep(tmp_path / "m.csv", "AE-8/8", [(4.0, 10), (0.0, 200)])
        result = render_chart(ReportSpec(inputs=[str(path)], bpsk_overlay=False),
                              tmp_path / "c.svg", tmp_path / "c.csv")
        assert result.series[0].x.tolist() == [1.0, 5.0]

    def test_rendering_is_deterministic(self, tmp_path):
        path = str(_sweep(tmp_path / "m.csv", "AE-8/8", [(0.0, 100), (2.0, 20), (4.0, 1)]))
        spec = ReportSpec(inputs=[path], title="SER")
        first = render_chart(spec, tmp_path / "a.svg", tmp_path / "a.csv")
        second = render_chart(spec, tmp_path / "b.svg", tmp_path / "b.csv")
        assert first.svg_path.read_bytes() == second.svg_path.read_bytes()

    def test_empty_input(self, tmp_path):
        path = write_sweep_csv(tmp_path / "empty.csv", [])
        with pytest.raises(ReportError):
            render_chart(ReportSpec(inputs=[str(path)]), tmp_path / "c.svg", tmp_path / "c.csv")

    def test_axis_needs_matching_files(self, tmp_path):
        path = write_windowed_ser_csv(tmp_path / "w.csv", "AE-8/8", [0.1], 10)
        with pytest.raises(ReportError):
            render_chart(ReportSpec(inputs=[str(path)]), tmp_path / "c.svg", tmp_path / "c.csv")

    def test_amplitude_axis_needs_amplitude_values(self, tmp_path):
        path = _sweep(tmp_path / "m.csv", "AE-8/8", [(0.0, 100)])
        with pytest.raises(ReportError):
            render_chart(ReportSpec(inputs=[str(path)], axis=ReportAxis.AMPLITUDE),
                         tmp_path / "c.svg", tmp_path / "c.csv")

    def test_window_axis_skips_theory(self, tmp_path):
        path = write_windowed_ser_csv(tmp_path / "w.csv", "AE-8/8", [0.1, 0.2, 0.05], 10)
        result = render_chart(ReportSpec(inputs=[str(path)], axis=ReportAxis.WINDOW, log_scale=False),
                              tmp_path / "c.svg", tmp_path / "c.csv")
        assert [s.label for s in result.series] == ["AE-8/8"]
