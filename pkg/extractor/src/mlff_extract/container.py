"""Writer for the MLFF embedding container, implemented from the byte spec.

Layout (little-endian): magic "MLFF", u16 version 1, u32 manifest length,
UTF-8 JSON manifest, then per record: u64 sample_id, u16 label, u16 task_id,
u16 variant, u16 reserved (0), float32 level vectors in manifest order.

Deliberately independent of the consumer package so the format stays an
actual interchange boundary.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DataError

MAGIC = b"MLFF"
VERSION = 1


def write_embeddings(path, *, level_dims, num_classes, records, backbone, pooling,
                     metadata=None) -> None:
    """records: iterables of (sample_id, label, task_id, variant, [level vectors])."""
    level_dims = [int(c) for c in level_dims]
    rows = list(records)
    manifest = {
        "format_version": VERSION,
        "record_kind": "embeddings",
        "num_levels": len(level_dims),
        "level_dims": level_dims,
        "num_classes": int(num_classes),
        "record_count": len(rows),
        "backbone": backbone,
        "pooling": pooling,
        "metadata": metadata or {},
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    seen = set()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for sample_id, label, task_id, variant, levels in rows:
            if not 0 <= label < num_classes:
                raise DataError(f"label {label} out of range for sample {sample_id}")
            key = (sample_id, variant)
            if key in seen:
                raise DataError(f"duplicate (sample_id, variant) {key}")
            seen.add(key)
            f.write(struct.pack("<QHHHH", sample_id, label, task_id, variant, 0))
            for vec, dim in zip(levels, level_dims):
                arr = np.ascontiguousarray(vec, dtype="<f4")
                if arr.shape != (dim,):
                    raise DataError(
                        f"sample {sample_id}: level dim {arr.shape} != ({dim},)"
                    )
                if not np.all(np.isfinite(arr)):
                    raise DataError(f"sample {sample_id}: non-finite values")
                f.write(arr.tobytes())
