"""Scoring helpers shared by the estimators and the harness."""

from __future__ import annotations

import numpy as np


def f1_score(y_true, y_pred) -> float:
    """F1 of the positive class; 1.0 when there are no positives to find or report."""
    t = np.asarray(y_true).astype(bool)
    p = np.asarray(y_pred).astype(bool)
    tp = np.count_nonzero(t & p)
    fp = np.count_nonzero(~t & p)
    fn = np.count_nonzero(t & ~p)
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def rmse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    if a.size == 0:
        return 0.0
    return float(np.sqrt(np.mean((a - b) ** 2)))


def jain_index(values) -> float:
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("jain_index needs at least one value")
    if np.any(x < 0):
        raise ValueError("values must be non-negative")
    top = x.max()
    if top == 0:
        raise ValueError("values are all zero")
    x = x / top  # scale-free, and keeps tiny values from underflowing when squared
    return float(x.sum() ** 2 / (x.size * np.sum(x * x)))
