"""Persistent container for multi-level embedding datasets, plus partitioning,
embedding-space augmentation, and a synthetic task-stream generator.

Container layout (all little-endian, bit-exact across platforms):

    magic   4 bytes  0x4D 0x4C 0x46 0x46  ("MLFF")
    version u16      1
    length  u32      manifest byte length L
    manifest L bytes UTF-8 JSON
    records record_count x (u64 sample_id, u16 label, u16 task_id,
             u16 variant, u16 reserved=0, f32 level vectors in level order)

The same framing carries head checkpoints with a different record kind; see
``checkpoint``.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, CorruptionError, DataError, FormatError, NumericError

MAGIC = b"MLFF"
FORMAT_VERSION = 1
_HEADER = np.dtype(
    [
        ("sample_id", "<u8"),
        ("label", "<u2"),
        ("task_id", "<u2"),
        ("variant", "<u2"),
        ("reserved", "<u2"),
    ]
)


@dataclass
class DatasetManifest:
    level_dims: tuple[int, ...]
    num_classes: int
    record_count: int = 0
    backbone: str = "unknown"
    pooling: str = "unknown"
    metadata: dict = field(default_factory=dict)
    record_kind: str = "embeddings"
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        self.level_dims = tuple(int(c) for c in self.level_dims)
        if any(c < 1 for c in self.level_dims):
            raise ConfigurationError(f"level dims must be >= 1, got {self.level_dims}")
        if self.num_classes < 1:
            raise ConfigurationError(f"num_classes must be >= 1, got {self.num_classes}")

    @property
    def num_levels(self) -> int:
        return len(self.level_dims)

    @property
    def total_dim(self) -> int:
        return int(sum(self.level_dims))

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "record_kind": self.record_kind,
            "num_levels": self.num_levels,
            "level_dims": list(self.level_dims),
            "num_classes": self.num_classes,
            "record_count": self.record_count,
            "backbone": self.backbone,
            "pooling": self.pooling,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        try:
            m = cls(
                level_dims=tuple(d["level_dims"]),
                num_classes=int(d["num_classes"]),
                record_count=int(d["record_count"]),
                backbone=str(d.get("backbone", "unknown")),
                pooling=str(d.get("pooling", "unknown")),
                metadata=dict(d.get("metadata", {})),
                record_kind=str(d.get("record_kind", "embeddings")),
                format_version=int(d.get("format_version", FORMAT_VERSION)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"bad manifest: {e}") from e
        if "num_levels" in d and int(d["num_levels"]) != m.num_levels:
            raise FormatError("manifest num_levels does not match level_dims")
        return m


@dataclass
class EmbeddingRecord:
    sample_id: int
    label: int
    task_id: int
    variant: int
    levels: list  # one float32 vector per level

    def representation(self) -> np.ndarray:
        """Concatenation of the level vectors, in level order."""
        return np.concatenate([np.asarray(v, dtype=np.float32) for v in self.levels])


@dataclass
class Task:
    task_id: int
    train: list  # EmbeddingRecord, all variants of the training samples
    test: list  # EmbeddingRecord, variant 0 only


@dataclass
class TaskStream:
    tasks: list  # ordered Task list

    def __len__(self) -> int:
        return len(self.tasks)


# ---------------------------------------------------------------------------
# container framing (shared with head checkpoints)
# ---------------------------------------------------------------------------

def write_container(path, manifest: dict, payload: bytes) -> None:
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(int(FORMAT_VERSION).to_bytes(2, "little"))
        f.write(len(blob).to_bytes(4, "little"))
        f.write(blob)
        f.write(payload)


def read_container(path) -> tuple[dict, bytes]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 10:
        raise FormatError("file too short to be a container")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version = int.from_bytes(data[4:6], "little")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported container version {version}")
    length = int.from_bytes(data[6:10], "little")
    if len(data) < 10 + length:
        raise CorruptionError("manifest truncated")
    try:
        manifest = json.loads(data[10 : 10 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"manifest is not valid JSON: {e}") from e
    return manifest, data[10 + length :]


# ---------------------------------------------------------------------------
# dataset read/write
# ---------------------------------------------------------------------------

def _record_dtype(total_dim: int) -> np.dtype:
    return np.dtype(_HEADER.descr + [("values", "<f4", (total_dim,))])


def _validate_records(manifest: DatasetManifest, records) -> None:
    seen = set()
    for r in records:
        if len(r.levels) != manifest.num_levels:
            raise DataError(
                f"record {r.sample_id} has {len(r.levels)} levels, "
                f"expected {manifest.num_levels}"
            )
        for v, c in zip(r.levels, manifest.level_dims):
            arr = np.asarray(v)
            if arr.shape != (c,):
                raise DataError(
                    f"record {r.sample_id} level dim {arr.shape} != ({c},)"
                )
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"record {r.sample_id} contains NaN or Inf")
        if not 0 <= r.label < manifest.num_classes:
            raise DataError(f"record {r.sample_id} label {r.label} out of range")
        key = (r.sample_id, r.variant)
        if key in seen:
            raise DataError(f"duplicate (sample_id, variant) {key}")
        seen.add(key)


def write_dataset(manifest: DatasetManifest, records, path) -> None:
    records = list(records)
    manifest.record_count = len(records)
    _validate_records(manifest, records)
    dt = _record_dtype(manifest.total_dim)
    arr = np.zeros(len(records), dtype=dt)
    for i, r in enumerate(records):
        arr[i]["sample_id"] = r.sample_id
        arr[i]["label"] = r.label
        arr[i]["task_id"] = r.task_id
        arr[i]["variant"] = r.variant
        arr[i]["values"] = np.concatenate(
            [np.asarray(v, dtype="<f4") for v in r.levels]
        )
    write_container(path, manifest.to_dict(), arr.tobytes())


def read_dataset(path) -> tuple[DatasetManifest, list]:
    raw_manifest, payload = read_container(path)
    manifest = DatasetManifest.from_dict(raw_manifest)
    if manifest.record_kind != "embeddings":
        raise FormatError(
            f"expected an embeddings dataset, found record kind {manifest.record_kind!r}"
        )
    dt = _record_dtype(manifest.total_dim)
    expected = manifest.record_count * dt.itemsize
    if len(payload) != expected:
        raise CorruptionError(
            f"payload has {len(payload)} bytes, expected {expected} "
            f"({manifest.record_count} records of {dt.itemsize} bytes)"
        )
    arr = np.frombuffer(payload, dtype=dt)
    offsets = np.cumsum([0] + list(manifest.level_dims))
    records = []
    for row in arr:
        values = np.array(row["values"], dtype=np.float32)
        if not np.all(np.isfinite(values)):
            raise NumericError(f"record {int(row['sample_id'])} contains NaN or Inf")
        if row["reserved"] != 0:
            raise FormatError("reserved field must be zero")
        levels = [values[offsets[i] : offsets[i + 1]] for i in range(manifest.num_levels)]
        records.append(
            EmbeddingRecord(
                sample_id=int(row["sample_id"]),
                label=int(row["label"]),
                task_id=int(row["task_id"]),
                variant=int(row["variant"]),
                levels=levels,
            )
        )
    _validate_records(manifest, records)
    return manifest, records


def export_records_csv(manifest: DatasetManifest, records, path) -> None:
    """One-way CSV dump of the concatenated representations, for plotting."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["sample_id", "label", "task_id", "variant"]
            + [f"v{i}" for i in range(manifest.total_dim)]
        )
        for r in records:
            rep = r.representation()
            writer.writerow(
                [r.sample_id, r.label, r.task_id, r.variant] + [repr(float(x)) for x in rep]
            )


# ---------------------------------------------------------------------------
# task partitioning
# ---------------------------------------------------------------------------

def partition_tasks(records, split_seed: int, train_per_task: int,
                    task_order=None) -> TaskStream:
    """Split records into per-task train/test sets by sample id.

    Per task, ``train_per_task`` sample ids are drawn uniformly (seeded) for
    training; the rest are held out for testing.  All augmentation variants
    follow their sample into the train split; the test split keeps only
    variant 0.  Tasks are ordered by ascending task id unless an explicit
    permutation is given.
    """
    if train_per_task < 1:
        raise ConfigurationError(f"train_per_task must be >= 1, got {train_per_task}")
    by_task: dict[int, list] = {}
    for r in records:
        by_task.setdefault(r.task_id, []).append(r)
    if not by_task:
        raise DataError("no records to partition")
    task_ids = sorted(by_task)
    if task_order is not None:
        task_order = [int(t) for t in task_order]
        unknown = [t for t in task_order if t not in by_task]
        if unknown:
            raise ConfigurationError(f"unknown task ids in permutation: {unknown}")
        if sorted(task_order) != task_ids:
            raise ConfigurationError("task permutation must cover every task exactly once")
    rng = np.random.default_rng(split_seed)
    split: dict[int, Task] = {}
    for tid in task_ids:  # fixed draw order: ascending task id
        recs = by_task[tid]
        sample_ids = np.array(sorted({r.sample_id for r in recs}), dtype=np.uint64)
        n = sample_ids.size
        if n > train_per_task:
            chosen = rng.choice(n, size=train_per_task, replace=False)
            train_ids = set(sample_ids[chosen].tolist())
        else:
            warnings.warn(
                f"task {tid} has only {n} samples (<= train_per_task="
                f"{train_per_task}); holding out a single sample for testing"
            )
            held_out = rng.integers(n)
            train_ids = set(sample_ids.tolist()) - {int(sample_ids[held_out])}
        train = [r for r in recs if r.sample_id in train_ids]
        test = [r for r in recs if r.sample_id not in train_ids and r.variant == 0]
        split[tid] = Task(task_id=tid, train=train, test=test)
    order = task_order if task_order is not None else task_ids
    return TaskStream(tasks=[split[tid] for tid in order])


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------

@dataclass
class SynthSpec:
    """Desk-scale stand-in for a multi-level embedding dataset.

    Every level drifts per task (mean shift ``task_shift``); only the
    ``signal_level`` carries class information, as a push of size
    ``class_separation`` along per-task orthonormal class directions.
    """

    num_tasks: int
    num_classes: int
    level_dims: tuple[int, ...]
    samples_per_class: int
    signal_level: int
    class_separation: float
    task_shift: float = 1.0
    noise: float = 1.0

    def __post_init__(self):
        self.level_dims = tuple(int(c) for c in self.level_dims)
        if self.num_tasks < 1 or self.num_classes < 2:
            raise ConfigurationError("need num_tasks >= 1 and num_classes >= 2")
        if self.samples_per_class < 1:
            raise ConfigurationError("samples_per_class must be >= 1")
        n = len(self.level_dims)
        s = self.signal_level
        if s < -n or s >= n:
            raise ConfigurationError(f"signal_level {s} outside [-{n}, {n})")
        self.signal_level = s % n
        if self.level_dims[self.signal_level] < self.num_classes:
            raise ConfigurationError(
                "signal level dim must be >= num_classes for orthonormal class directions"
            )
        if self.noise < 0 or self.task_shift < 0 or self.class_separation < 0:
            raise ConfigurationError("noise, task_shift and class_separation must be >= 0")

    def to_dict(self) -> dict:
        return {
            "num_tasks": self.num_tasks,
            "num_classes": self.num_classes,
            "level_dims": list(self.level_dims),
            "samples_per_class": self.samples_per_class,
            "signal_level": self.signal_level,
            "class_separation": self.class_separation,
            "task_shift": self.task_shift,
            "noise": self.noise,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(
            num_tasks=int(d["num_tasks"]),
            num_classes=int(d["num_classes"]),
            level_dims=tuple(d["level_dims"]),
            samples_per_class=int(d["samples_per_class"]),
            signal_level=int(d["signal_level"]),
            class_separation=float(d["class_separation"]),
            task_shift=float(d.get("task_shift", 1.0)),
            noise=float(d.get("noise", 1.0)),
        )


def _orthonormal_directions(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Gram-Schmidt on Gaussian draws; rows are orthonormal."""
    out = np.zeros((count, dim))
    for i in range(count):
        v = rng.normal(size=dim)
        for j in range(i):
            v -= (v @ out[j]) * out[j]
        norm = np.linalg.norm(v)
        if norm < 1e-9:  # probability-zero for Gaussian draws
            raise NumericError("degenerate draw during orthonormalization")
        out[i] = v / norm
    return out


def synth_generate(spec: SynthSpec, seed: int) -> tuple[DatasetManifest, list]:
    rng = np.random.default_rng(seed)
    n_levels = len(spec.level_dims)
    s = spec.signal_level
    task_means = [
        [rng.normal(0.0, spec.task_shift, size=c) for c in spec.level_dims]
        for _ in range(spec.num_tasks)
    ]
    directions = [
        _orthonormal_directions(rng, spec.num_classes, spec.level_dims[s])
        for _ in range(spec.num_tasks)
    ]
    records = []
    sid = 0
    for t in range(spec.num_tasks):
        for c in range(spec.num_classes):
            shift = spec.class_separation * directions[t][c]
            for _ in range(spec.samples_per_class):
                levels = []
                for n in range(n_levels):
                    x = task_means[t][n] + rng.normal(0.0, spec.noise, size=spec.level_dims[n])
                    if n == s:
                        x = x + shift
                    levels.append(x.astype(np.float32))
                records.append(
                    EmbeddingRecord(sample_id=sid, label=c, task_id=t, variant=0, levels=levels)
                )
                sid += 1
    manifest = DatasetManifest(
        level_dims=spec.level_dims,
        num_classes=spec.num_classes,
        record_count=len(records),
        backbone="synthetic",
        pooling="none",
        metadata={
            "generator": {
                "spec": spec.to_dict(),
                "seed": int(seed),
                "task_means": [[m.tolist() for m in task] for task in task_means],
                "class_directions": [d.tolist() for d in directions],
            }
        },
    )
    return manifest, records


# ---------------------------------------------------------------------------
# embedding-space augmentation
# ---------------------------------------------------------------------------

def augment_gaussian(record: EmbeddingRecord, sigma: float, seed: int,
                     variant: int | None = None) -> EmbeddingRecord:
    """New record with i.i.d. Gaussian noise added to every level vector.

    The source record is untouched; the copy's variant id is incremented
    unless an explicit variant index is given.
    """
    if sigma < 0:
        raise ConfigurationError(f"sigma must be >= 0, got {sigma}")
    rng = np.random.default_rng(seed)
    levels = [
        (np.asarray(v, dtype=np.float32) + rng.normal(0.0, sigma, size=len(v))).astype(np.float32)
        if sigma > 0
        else np.array(v, dtype=np.float32, copy=True)
        for v in record.levels
    ]
    return EmbeddingRecord(
        sample_id=record.sample_id,
        label=record.label,
        task_id=record.task_id,
        variant=record.variant + 1 if variant is None else int(variant),
        levels=levels,
    )


def augment_dataset(records, num_variants: int, sigma: float, seed: int) -> list:
    """Originals plus ``num_variants`` noisy variants (ids 1..V) per sample."""
    if num_variants < 0:
        raise ConfigurationError("num_variants must be >= 0")
    out = list(records)
    for i, r in enumerate(records):
        for v in range(1, num_variants + 1):
            child_seed = np.random.SeedSequence([seed, i, v]).generate_state(1)[0]
            out.append(augment_gaussian(r, sigma, int(child_seed), variant=r.variant + v))
    return out
