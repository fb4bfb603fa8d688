"""Softmax cross-entropy with the max-subtraction stabilization."""

from __future__ import annotations

import numpy as np

from ..errors import DataError


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits.

    Returns (loss, grad_logits) with grad = (softmax - onehot) / B.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    b, c = logits.shape
    if labels.shape != (b,):
        raise DataError(f"labels shape {labels.shape} does not match batch {b}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise DataError(f"label out of range [0, {c})")
    probs = softmax(logits)
    # log-prob via the shifted logits, avoids log(0) for saturated rows
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted[np.arange(b), labels] - log_z
    loss = float(-log_p.mean())
    grad = probs
    grad[np.arange(b), labels] -= 1.0
    grad = grad / b
    return loss, grad.astype(logits.dtype)
