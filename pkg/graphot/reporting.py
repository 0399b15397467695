"""
Result tables for graphot
Benchmark reports and plot-ready CSV / JSON emission
"""

from dataclasses import dataclass
from datetime import datetime
from typing import Any, Dict, Optional, Sequence
import json
import logging
import os

import numpy as np
import pandas as pd

from graphot.config import BENCH_COLUMNS, BENCH_DETAIL_COLUMNS, EXPORT_DIR, ensure_dirs
from graphot.errors import DataError, UsageError

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")
FLOAT_FORMAT = "%.6g"
NA_REP = "N.A."


@dataclass(frozen=True)
class BenchReport:
    """Per-solver edit-distance bounds and timings, plus the per-pair rows they summarize"""
    summary: pd.DataFrame
    details: pd.DataFrame

    def __post_init__(self):
        if list(self.summary.columns) != BENCH_COLUMNS:
            raise DataError(f"Bench summary columns {list(self.summary.columns)} != {BENCH_COLUMNS}")
        stds = self.summary[["std_distance", "std_seconds"]].to_numpy(dtype=float)
        if np.any(stds[~np.isnan(stds)] < 0):
            raise DataError("Negative standard deviation in bench summary")
        if np.any(self.summary["pairs"] <= 0):
            raise DataError("Bench summary rows need a positive pair count")

    @classmethod
    def from_details(cls, details: pd.DataFrame, solvers: Sequence[str]) -> "BenchReport":
        """
        Aggregate per-pair rows; solvers whose rows are all NaN (not run)
        keep NaN statistics, emitted as N.A.
        """
        rows = []
        for solver in solvers:
            part = details[details["solver"] == solver]
            rows.append({
                "solver": solver,
                "mean_distance": part["distance"].mean(),
                "std_distance": part["distance"].std(ddof=0),
                "mean_seconds": part["seconds"].mean(),
                "std_seconds": part["seconds"].std(ddof=0),
                "pairs": int(len(part)),
            })
        summary = pd.DataFrame(rows, columns=BENCH_COLUMNS)
        return cls(summary, details[BENCH_DETAIL_COLUMNS].reset_index(drop=True))


def table_to_text(df: pd.DataFrame, fmt: str = "csv") -> str:
    """
    CSV (header, comma separated, decimal point) or JSON records with sorted keys

    Missing values become N.A. in CSV and null in JSON.
    """
    if fmt not in FORMATS:
        raise UsageError(f"Unknown output format {fmt!r}, expected one of {FORMATS}")
    if fmt == "csv":
        return df.to_csv(index=False, float_format=FLOAT_FORMAT, na_rep=NA_REP, lineterminator="\n")
    records = json.loads(df.to_json(orient="records", double_precision=15))
    return json.dumps(records, sort_keys=True, indent=1) + "\n"


def record_to_text(record: Dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True) + "\n"


class ResultExporter:
    """
    Writes result tables to files

    Without an explicit path, tables land in exports/ under a timestamped name.
    """

    def __init__(self, export_dir: str = EXPORT_DIR):
        self.export_dir = export_dir

    def timestamped_path(self, name: str, fmt: str) -> str:
        if self.export_dir == EXPORT_DIR:
            ensure_dirs()
        else:
            os.makedirs(self.export_dir, exist_ok=True)
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        return os.path.join(self.export_dir, f"{name}_{timestamp}.{fmt}")

    def write_text(self, text: str, path: str) -> str:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        try:
            with open(path, "w", encoding="utf-8") as f:
                f.write(text)
        except OSError as e:
            raise DataError(f"Cannot write {path}: {e}") from e
        logger.info(f"Wrote {path}")
        return path

    def export_table(self, df: pd.DataFrame, name: str, fmt: str = "csv", path: Optional[str] = None) -> str:
        """
        Export a DataFrame

        Args:
            df: Table to export
            name: Base file name used when path is None
            fmt: "csv" or "json"
            path: Explicit destination

        Returns:
            Full path of the written file
        """
        target = path or self.timestamped_path(name, fmt)
        return self.write_text(table_to_text(df, fmt), target)
