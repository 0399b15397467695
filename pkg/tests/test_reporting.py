import json

import numpy as np
import pandas as pd
import pytest

from graphot.config import BENCH_COLUMNS, BENCH_DETAIL_COLUMNS
from graphot.errors import DataError, UsageError
from graphot.reporting import BenchReport, ResultExporter, record_to_text, table_to_text


def _details() -> pd.DataFrame:
    rows = [
        (0, 0, 1, "random", 4.0, 0.001),
        (1, 0, 2, "random", 2.0, 0.003),
        (0, 0, 1, "exhaustive", np.nan, np.nan),
        (1, 0, 2, "exhaustive", np.nan, np.nan),
    ]
    return pd.DataFrame(rows, columns=BENCH_DETAIL_COLUMNS)


class TestBenchReport:
    def test_from_details(self):
        report = BenchReport.from_details(_details(), ["random", "exhaustive"])
        row = report.summary.set_index("solver").loc["random"]
        assert row["mean_distance"] == 3.0
        assert row["std_distance"] == 1.0
        assert row["pairs"] == 2
        assert np.isnan(report.summary.set_index("solver").loc["exhaustive", "mean_distance"])
        assert list(report.summary.columns) == BENCH_COLUMNS

    def test_wrong_columns(self):
        with pytest.raises(DataError):
            BenchReport(pd.DataFrame({"solver": ["random"]}), _details())

    def test_zero_pairs(self):
        summary = pd.DataFrame([["random", 1.0, 0.0, 0.1, 0.0, 0]], columns=BENCH_COLUMNS)
        with pytest.raises(DataError):
            BenchReport(summary, _details())


class TestTableText:
    def test_csv_marks_missing_values(self):
        text = table_to_text(BenchReport.from_details(_details(), ["random", "exhaustive"]).summary, "csv")
        lines = text.splitlines()
        assert lines[0] == ",".join(BENCH_COLUMNS)
        assert lines[2].startswith("exhaustive,N.A.,N.A.")

    def test_json_records(self):
        df = pd.DataFrame({"p": [0.0, 0.5], "valid_fraction": [1.0, np.nan]})
        records = json.loads(table_to_text(df, "json"))
        assert records == [{"p": 0.0, "valid_fraction": 1.0}, {"p": 0.5, "valid_fraction": None}]

    def test_unknown_format(self):
        with pytest.raises(UsageError):
            table_to_text(pd.DataFrame(), "xlsx")

    def test_record_keys_sorted(self):
        assert record_to_text({"b": 1, "a": 2}) == '{"a": 2, "b": 1}\n'


class TestResultExporter:
    def test_timestamped_export(self, tmp_path):
        exporter = ResultExporter(str(tmp_path / "out"))
        path = exporter.export_table(pd.DataFrame({"step": [0], "loss": [1.5]}), "trace")
        assert path.startswith(str(tmp_path / "out" / "trace_"))
        assert path.endswith(".csv")
        assert open(path).read() == "step,loss\n0,1.5\n"

    def test_explicit_path(self, tmp_path):
        exporter = ResultExporter(str(tmp_path / "unused"))
        report = BenchReport.from_details(_details(), ["random"])
        written = exporter.export_table(report.details, "bench_details", "json", str(tmp_path / "d.json"))
        assert written == str(tmp_path / "d.json")
        assert len(json.loads((tmp_path / "d.json").read_text())) == 4
        assert not (tmp_path / "unused").exists()
