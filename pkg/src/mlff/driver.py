"""Experiment orchestration: initial training, adaptation rounds with historic
samples interleaved, per-round evaluation, and report files.

Historic samples are shuffled once per adaptation round and spread uniformly
over the round's mini-batch schedule, so every buffered sample is trained on
exactly once per round and batchnorm always sees mixed batches.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _version
from .errors import ConfigurationError, DataError, ProtocolError
from .metrics import compute_af1, compute_ff1, macro_f1
from .model import (
    FusionConfig,
    LinearProbeHead,
    MLFFHead,
    MLPProbeHead,
    predict_classes,
)
from .nn import adam_step, cosine_lr, softmax_cross_entropy
from .rehearsal import RehearsalBuffer, entries_from_records
from .store import TaskStream
from .validation import split_representation

log = logging.getLogger("mlff.driver")

REPORT_SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    epochs: int = 3  # per adaptation round
    initial_epochs: int = 0  # 0: same as epochs
    batch_size: int = 32
    lr_max: float = 1e-3
    lr_min: float = 0.0
    buffer_capacity: int = 0
    strategy: str = "balanced_random"
    head: str = "mlff"  # mlff | linear | mlp
    model_seed: int = 0
    data_seed: int = 0
    strategy_seed: int = 0
    augment_sigma: float = 0.0
    use_variants: bool = True
    aser_k: int = 5
    aser_eval_subsample: int = 64
    grasp_epsilon: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigurationError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.buffer_capacity < 0:
            raise ConfigurationError("buffer_capacity must be >= 0")
        if self.head not in ("mlff", "linear", "mlp"):
            raise ConfigurationError(f"unknown head kind {self.head!r}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "initial_epochs": self.initial_epochs,
            "batch_size": self.batch_size,
            "lr_max": self.lr_max,
            "lr_min": self.lr_min,
            "buffer_capacity": self.buffer_capacity,
            "strategy": self.strategy,
            "head": self.head,
            "model_seed": self.model_seed,
            "data_seed": self.data_seed,
            "strategy_seed": self.strategy_seed,
            "augment_sigma": self.augment_sigma,
            "use_variants": self.use_variants,
            "aser_k": self.aser_k,
            "aser_eval_subsample": self.aser_eval_subsample,
            "grasp_epsilon": self.grasp_epsilon,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class MetricsReport:
    f1_matrix: np.ndarray  # rows: rounds, cols: tasks in stream order
    af1: float
    ff1: float | None
    loss_traces: list  # per round, per epoch mean loss
    historic_exposure: list  # per adaptation round: [min, max] exposures
    config: dict
    task_ids: list
    wall_clock_per_round: list = field(default_factory=list)
    head: object = None  # trained head, not serialized

    def payload(self) -> dict:
        return {
            "config": self.config,
            "task_ids": list(self.task_ids),
            "num_tasks": len(self.task_ids),
            "f1_matrix": [[float(x) for x in row] for row in self.f1_matrix],
            "af1": float(self.af1),
            "ff1": None if self.ff1 is None else float(self.ff1),
            "loss_traces": [[float(x) for x in tr] for tr in self.loss_traces],
            "historic_exposure": [list(map(int, e)) for e in self.historic_exposure],
        }

    def payload_bytes(self) -> bytes:
        return json.dumps(self.payload(), sort_keys=True, separators=(",", ":")).encode()


def _group_samples(records):
    """Sample ids in ascending order with their variant records (variant 0 first)."""
    groups: dict[int, list] = {}
    for r in records:
        groups.setdefault(r.sample_id, []).append(r)
    ordered = []
    for sid in sorted(groups):
        variants = sorted(groups[sid], key=lambda r: r.variant)
        if variants[0].variant != 0:
            raise DataError(f"sample {sid} has no variant-0 record")
        ordered.append(variants)
    return ordered


def _stack_levels(records_chunk, num_levels: int):
    return [
        np.stack([r.levels[n] for r in records_chunk]).astype(np.float32)
        for n in range(num_levels)
    ]


def _train_round(head, train_records, historic, level_dims, config: ExperimentConfig,
                 round_index: int):
    """One training round; returns (per-epoch losses, historic exposure [min, max])."""
    samples = _group_samples(train_records)
    n = len(samples)
    bs = config.batch_size
    epochs = config.initial_epochs if (round_index == 0 and config.initial_epochs) else config.epochs
    steps_per_epoch = n // bs + (1 if n % bs >= 2 else 0)
    if steps_per_epoch == 0:
        raise ProtocolError(f"task with {n} samples yields no trainable batch")
    total_steps = epochs * steps_per_epoch
    rng = np.random.default_rng(np.random.SeedSequence([config.data_seed, round_index]))

    h_count = len(historic)
    h_order = rng.permutation(h_count) if h_count else np.array([], dtype=int)
    h_levels = None
    h_labels = None
    if h_count:
        reps = np.stack([historic[i].representation for i in h_order])
        h_levels = split_representation(reps, level_dims)
        h_labels = np.array([historic[i].label for i in h_order], dtype=np.int64)
    exposure = np.zeros(h_count, dtype=np.int64)

    num_levels = len(level_dims)
    labels_all = np.array([variants[0].label for variants in samples], dtype=np.int64)
    # per-epoch augmentation: draw a stored variant when any exist, otherwise
    # fall back to embedding-space noise (new-task rows only)
    variant_mode = config.use_variants and any(len(v) > 1 for v in samples)
    noise_mode = not variant_mode and config.augment_sigma > 0
    step = 0
    epoch_losses = []
    for _ in range(epochs):
        perm = rng.permutation(n)
        chunks = []
        for start in range(0, n, bs):
            idx = perm[start : start + bs]
            if idx.size >= 2:
                chunks.append(idx)
        loss_sum, count = 0.0, 0
        for chunk in chunks:
            rows = []
            for i in chunk:
                variants = samples[i]
                if variant_mode and len(variants) > 1:
                    rows.append(variants[int(rng.integers(len(variants)))])
                else:
                    rows.append(variants[0])
            batch = _stack_levels(rows, num_levels)
            if noise_mode:
                batch = [
                    (b + rng.normal(0.0, config.augment_sigma, size=b.shape)).astype(np.float32)
                    for b in batch
                ]
            y = labels_all[chunk]
            if h_count:
                lo = (step * h_count) // total_steps
                hi = ((step + 1) * h_count) // total_steps
                if hi > lo:
                    batch = [
                        np.concatenate([b, hl[lo:hi]]) for b, hl in zip(batch, h_levels)
                    ]
                    y = np.concatenate([y, h_labels[lo:hi]])
                    exposure[lo:hi] += 1
            logits = head.forward(batch, train=True)
            loss, grad = softmax_cross_entropy(logits, y)
            head.backward(grad)
            lr = cosine_lr(step, total_steps, config.lr_max, config.lr_min)
            adam_step(head.params(), head.grads(), head.adam, lr)
            step += 1
            loss_sum += loss * len(y)
            count += len(y)
        epoch_losses.append(loss_sum / count)
    if h_count:
        if exposure.min() != 1 or exposure.max() != 1:
            raise ProtocolError(
                f"historic exposure violated: min {exposure.min()}, max {exposure.max()}"
            )
        bounds = [int(exposure.min()), int(exposure.max())]
    else:
        bounds = [0, 0]
    return epoch_losses, bounds


def build_experiment_head(config: ExperimentConfig, fusion: FusionConfig):
    if config.head == "mlff":
        return MLFFHead(fusion, seed=config.model_seed)
    in_dim = fusion.level_dims[-1]
    if config.head == "linear":
        return LinearProbeHead(in_dim, fusion.num_classes, seed=config.model_seed)
    return MLPProbeHead(in_dim, fusion.fused_dim, fusion.num_classes, seed=config.model_seed)


def evaluate_head(head, records, level_dims, num_classes: int) -> float:
    """Macro F1 of the head on a record list (eval mode, batchnorm frozen)."""
    if not records:
        raise ProtocolError("cannot evaluate on an empty record list")
    levels = _stack_levels(records, len(level_dims))
    logits = head.forward(levels, train=False)
    preds = predict_classes(logits)
    labels = np.array([r.label for r in records], dtype=np.int64)
    return macro_f1(preds, labels, num_classes)


def run_experiment(config: ExperimentConfig, stream: TaskStream,
                   fusion: FusionConfig) -> MetricsReport:
    if not stream.tasks:
        raise ProtocolError("empty task stream")
    t_count = len(stream.tasks)
    head = build_experiment_head(config, fusion)
    use_buffer = config.buffer_capacity > 0 and config.strategy != "none"
    buffer = RehearsalBuffer(config.buffer_capacity) if use_buffer else None
    strategy_opts = {
        "k": config.aser_k,
        "eval_subsample": config.aser_eval_subsample,
        "epsilon": config.grasp_epsilon,
    }
    f1 = np.zeros((t_count, t_count))
    losses, exposures, wall = [], [], []
    for r, task in enumerate(stream.tasks):
        t0 = time.perf_counter()
        historic = buffer.entries() if (buffer is not None and r > 0) else []
        trace, bounds = _train_round(
            head, task.train, historic, fusion.level_dims, config, round_index=r
        )
        losses.append(trace)
        if r > 0:
            exposures.append(bounds)
        if buffer is not None:
            child = int(np.random.SeedSequence([config.strategy_seed, r]).generate_state(1)[0])
            buffer.update(
                task.task_id,
                entries_from_records(task.train),
                config.strategy,
                child,
                **strategy_opts,
            )
        for c, other in enumerate(stream.tasks):
            f1[r, c] = evaluate_head(head, other.test, fusion.level_dims, fusion.num_classes)
        wall.append(time.perf_counter() - t0)
        log.info("round %d/%d done: mean f1 so far %.4f", r + 1, t_count, f1[r, : r + 1].mean())
    report = MetricsReport(
        f1_matrix=f1,
        af1=compute_af1(f1),
        ff1=compute_ff1(f1) if t_count >= 2 else None,
        loss_traces=losses,
        historic_exposure=exposures,
        config={"experiment": config.to_dict(), "fusion": fusion.to_dict()},
        task_ids=[task.task_id for task in stream.tasks],
        wall_clock_per_round=wall,
        head=head,
    )
    return report


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def save_report(report: MetricsReport, path) -> None:
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "payload": report.payload(),
        "meta": {
            "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "wall_clock_per_round": list(report.wall_clock_per_round),
            "toolkit_version": _version,
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write("\n")


def load_report(path) -> dict:
    """Load and cross-check a report: AF1/FF1 must match their matrix."""
    with open(path) as f:
        doc = json.load(f)
    if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise DataError(f"unsupported report schema {doc.get('schema_version')!r}")
    payload = doc["payload"]
    matrix = np.asarray(payload["f1_matrix"], dtype=np.float64)
    if abs(compute_af1(matrix) - payload["af1"]) > 1e-9:
        raise DataError("stored AF1 does not match the F1 matrix")
    if payload["ff1"] is not None and abs(compute_ff1(matrix) - payload["ff1"]) > 1e-9:
        raise DataError("stored FF1 does not match the F1 matrix")
    return doc


def export_report_csv(report_payload: dict, path) -> None:
    """One CSV row per (round, task) F1 entry."""
    matrix = report_payload["f1_matrix"]
    task_ids = report_payload["task_ids"]
    with open(path, "w", newline="") as f:
        f.write("round,task,f1\n")
        for r, row in enumerate(matrix):
            for c, value in enumerate(row):
                f.write(f"{r},{task_ids[c]},{repr(float(value))}\n")
