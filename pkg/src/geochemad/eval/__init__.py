"""Evaluation protocol, ranking metrics and report writers."""

from .metrics import average_precision, distance_to_deposits, pr_auc, precision_recall_curve, roc_auc
from .protocol import (
    BackgroundDraw,
    BackgroundSaturationWarning,
    EvalProtocol,
    EvalReport,
    PositiveAssignment,
    assign_positive_scores,
    eligible_background,
    evaluate_scores,
    run_protocol,
    sample_background,
)
from .report import flat_row, read_report_json, write_comparison_table, write_flat_csv, write_report_json

__all__ = [
    "BackgroundDraw",
    "BackgroundSaturationWarning",
    "EvalProtocol",
    "EvalReport",
    "PositiveAssignment",
    "assign_positive_scores",
    "average_precision",
    "distance_to_deposits",
    "eligible_background",
    "evaluate_scores",
    "flat_row",
    "pr_auc",
    "precision_recall_curve",
    "read_report_json",
    "roc_auc",
    "run_protocol",
    "sample_background",
    "write_comparison_table",
    "write_flat_csv",
    "write_report_json",
]
