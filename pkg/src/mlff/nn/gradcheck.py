"""Central finite-difference harness for checking analytic gradients.

Build-time testing aid: run layers in float64, compare ``backward`` output
against (f(x+h) - f(x-h)) / 2h coordinate by coordinate.
"""

from __future__ import annotations

import numpy as np


def numeric_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function at ``x`` (float64)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max elementwise |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def gradcheck(f, x: np.ndarray, analytic: np.ndarray, h: float = 1e-5,
              floor: float = 1e-6) -> float:
    """Relative error between ``analytic`` and the finite-difference gradient."""
    return relative_error(analytic, numeric_gradient(f, x, h=h), floor=floor)
