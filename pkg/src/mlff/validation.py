"""Input validation helpers used by the estimators and the numeric core."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, DataError, NumericError


def check_matrix(x, name: str = "input", dtype=None) -> np.ndarray:
    """Coerce ``x`` to a 2-D float array and reject non-finite entries."""
    arr = np.asarray(x, dtype=dtype if dtype is not None else np.float32)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ConfigurationError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains NaN or Inf")
    return arr


def check_vector(x, name: str = "vector", dtype=None) -> np.ndarray:
    arr = np.asarray(x, dtype=dtype if dtype is not None else np.float32)
    if arr.ndim != 1:
        raise ConfigurationError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains NaN or Inf")
    return arr


def check_labels(y, num_classes: int | None = None, name: str = "labels") -> np.ndarray:
    """Coerce labels to int64 and check the [0, num_classes) range."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise DataError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(arr)
        if not np.array_equal(rounded, arr):
            raise DataError(f"{name} must be integer class indices")
        arr = rounded
    arr = arr.astype(np.int64)
    if arr.size:
        if arr.min() < 0:
            raise DataError(f"{name} contains negative class index {arr.min()}")
        if num_classes is not None and arr.max() >= num_classes:
            raise DataError(
                f"{name} contains index {arr.max()} >= num_classes {num_classes}"
            )
    return arr


def check_levels(levels, level_dims=None, dtype=None) -> list[np.ndarray]:
    """Validate a list of per-level matrices sharing one batch dimension."""
    if isinstance(levels, np.ndarray) and levels.ndim == 2:
        levels = [levels]
    mats = [check_matrix(l, name=f"level {i}", dtype=dtype) for i, l in enumerate(levels)]
    if not mats:
        raise ConfigurationError("at least one level matrix is required")
    batch = mats[0].shape[0]
    for i, m in enumerate(mats):
        if m.shape[0] != batch:
            raise DataError(
                f"level {i} has batch size {m.shape[0]}, expected {batch}"
            )
    if level_dims is not None:
        if len(mats) != len(level_dims):
            raise DataError(f"expected {len(level_dims)} levels, got {len(mats)}")
        for i, (m, c) in enumerate(zip(mats, level_dims)):
            if m.shape[1] != c:
                raise DataError(f"level {i} has dim {m.shape[1]}, expected {c}")
    return mats


def concat_levels(levels) -> np.ndarray:
    """Concatenate level matrices in level order into one (B, sum(c_n)) matrix."""
    return np.concatenate(check_levels(levels), axis=1)


def split_representation(rep: np.ndarray, level_dims) -> list[np.ndarray]:
    """Inverse of :func:`concat_levels` for a known dim layout."""
    rep = np.asarray(rep)
    if rep.ndim == 1:
        rep = rep.reshape(1, -1)
    total = int(sum(level_dims))
    if rep.shape[1] != total:
        raise DataError(f"representation dim {rep.shape[1]} != sum(level_dims) {total}")
    out = []
    offset = 0
    for c in level_dims:
        out.append(rep[:, offset : offset + int(c)])
        offset += int(c)
    return out
