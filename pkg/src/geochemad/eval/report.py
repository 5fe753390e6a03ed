"""Report serialisation: one JSON document per detector and flat CSV tables."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .protocol import EvalReport

FLAT_FIELDS = ("dataset", "detector", "config_hash", "auc_mean", "auc_var", "ap_mean", "ap_var",
               "pr_auc_mean", "pr_auc_var", "dtd", "n_matched", "n_dropped")


def write_report_json(report: EvalReport, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


def read_report_json(path) -> dict:
    return json.loads(Path(path).read_text())


def flat_row(report: EvalReport, dataset: str) -> dict:
    agg = report.aggregates()
    row = {"dataset": dataset, "detector": report.detector, "config_hash": report.config_hash,
           "n_matched": report.n_matched, "n_dropped": report.n_dropped}
    row.update({k: repr(v) for k, v in agg.items()})
    return row


def write_flat_csv(rows, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=FLAT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def write_comparison_table(table: dict[str, dict[str, float]], detectors, path) -> Path:
    """Rows are datasets, columns detectors, cells the mean AUC (repr, exact)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset"] + list(detectors))
        for dataset, cells in table.items():
            w.writerow([dataset] + [repr(cells[d]) if d in cells else "" for d in detectors])
    return path
