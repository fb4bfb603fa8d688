"""Pooling rules that turn a tapped stage output into one vector per image.

Spatial feature maps are average-pooled down to their channel count; token
sequences keep the class token and concatenate it with the mean of the
remaining tokens (so a stage with embed width E pools to 2E).
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def pool_spatial(feature_map) -> np.ndarray:
    """(C, H, W) feature map -> (C,) per-channel spatial mean."""
    arr = np.asarray(feature_map, dtype=np.float32)
    if arr.ndim != 3:
        raise DataError(f"expected a (C, H, W) map, got shape {arr.shape}")
    c, h, w = arr.shape
    if h < 1 or w < 1 or c < 1:
        raise DataError(f"empty feature map {arr.shape}")
    return arr.mean(axis=(1, 2))


def pool_vit(tokens) -> np.ndarray:
    """((1+R), E) token matrix, class token first -> (2E,) [cls | mean rest]."""
    arr = np.asarray(tokens, dtype=np.float32)
    if arr.ndim != 2:
        raise DataError(f"expected a (1+R, E) token matrix, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise DataError("need the class token plus at least one patch token")
    cls = arr[0]
    rest = arr[1:].mean(axis=0)
    return np.concatenate([cls, rest])
