"""Permit-loss forecasting, outage detection and labeling for accelerator hour files."""

from ._core import (
    Error,
    Forest,
    canonicalize_label,
    confusion_scores,
    gini,
    outage_histogram,
    param_count,
    preprocess,
    read_frame,
    run_cli,
    train_forest,
    window_count,
    write_frame,
)

__all__ = [
    "Error",
    "Forest",
    "canonicalize_label",
    "confusion_scores",
    "gini",
    "outage_histogram",
    "param_count",
    "preprocess",
    "read_frame",
    "run_cli",
    "train_forest",
    "window_count",
    "write_frame",
]
