"""Macro F1 and the two continual-learning aggregates (AF1, FF1)."""

from __future__ import annotations

import numpy as np

from .errors import DataError, ProtocolError


def macro_f1(predictions, labels, num_classes: int) -> float:
    """Unweighted mean over classes of 2TP / (2TP + FP + FN).

    Classes absent from the ground-truth labels are excluded from the mean;
    for classes present in the labels the denominator is always positive.
    """
    preds = np.asarray(predictions)
    truth = np.asarray(labels)
    if preds.shape != truth.shape or preds.ndim != 1:
        raise DataError(f"shape mismatch: predictions {preds.shape}, labels {truth.shape}")
    if preds.size == 0:
        raise ProtocolError("cannot compute F1 of an empty batch")
    if truth.min() < 0 or truth.max() >= num_classes:
        raise DataError("label out of range")
    if preds.min() < 0 or preds.max() >= num_classes:
        raise DataError("prediction out of range")
    scores = []
    for k in range(num_classes):
        in_truth = truth == k
        if not in_truth.any():
            continue
        in_pred = preds == k
        tp = np.count_nonzero(in_truth & in_pred)
        fp = np.count_nonzero(~in_truth & in_pred)
        fn = np.count_nonzero(in_truth & ~in_pred)
        scores.append(2.0 * tp / (2.0 * tp + fp + fn))
    return float(np.mean(scores))


def _check_matrix(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataError(f"F1 matrix must be square, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError("F1 matrix is not fully populated")
    return m


def compute_af1(matrix) -> float:
    """Mean F1 across all tasks after the final adaptation round (last row)."""
    m = _check_matrix(matrix)
    return float(m[-1].mean())


def compute_ff1(matrix) -> float:
    """Mean F1 on not-yet-seen tasks, averaged over all pre-final rounds.

    After round r the model has seen tasks 0..r, so row r contributes the
    mean over columns r+1..T-1; the final round has no future tasks and is
    excluded.
    """
    m = _check_matrix(matrix)
    t = m.shape[0]
    if t < 2:
        raise ProtocolError("FF1 needs at least two tasks")
    return float(np.mean([m[r, r + 1 :].mean() for r in range(t - 1)]))
