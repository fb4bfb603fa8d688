"""Fusion head, probe baselines, training loop, and parameter accounting.

The trainable surface is exactly the head: level embeddings arrive as inputs
and are never parameters.  Heads share a small interface (forward over a list
of level matrices, backward from logit gradients, flat parameter lists) so the
continual-learning driver can treat them interchangeably.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, ProtocolError
from .nn import AdamState, BatchNorm1d, Dense, ReLU, adam_step, cosine_lr, softmax_cross_entropy
from .validation import check_labels, check_levels


@dataclass(frozen=True)
class FusionConfig:
    """Architecture hyperparameters of the fusion head.

    ``fused_dim`` defaults to the dimensionality of the last (deepest) level,
    and must be divisible by the number of levels: each branch projects its
    level down to fused_dim / num_levels before concatenation.
    """

    level_dims: tuple[int, ...]
    num_classes: int
    fused_dim: int = 0  # 0 means: use the last level's dim

    def __post_init__(self):
        dims = tuple(int(c) for c in self.level_dims)
        object.__setattr__(self, "level_dims", dims)
        if len(dims) < 1:
            raise ConfigurationError("need at least one level")
        if any(c < 1 for c in dims):
            raise ConfigurationError(f"level dims must be >= 1, got {dims}")
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        d = int(self.fused_dim) if self.fused_dim else dims[-1]
        object.__setattr__(self, "fused_dim", d)
        if d % len(dims) != 0:
            raise ConfigurationError(
                f"fused_dim {d} not divisible by num_levels {len(dims)}"
            )

    @property
    def num_levels(self) -> int:
        return len(self.level_dims)

    @property
    def branch_dim(self) -> int:
        return self.fused_dim // self.num_levels

    def to_dict(self) -> dict:
        return {
            "level_dims": list(self.level_dims),
            "num_classes": self.num_classes,
            "fused_dim": self.fused_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FusionConfig":
        return cls(
            level_dims=tuple(d["level_dims"]),
            num_classes=int(d["num_classes"]),
            fused_dim=int(d.get("fused_dim", 0)),
        )


class MLFFHead:
    """Per-level projection -> batchnorm -> ReLU, concatenation, two-layer MLP.

    Branches are concatenated in level order (shallowest first); the order is
    part of the checkpoint contract.
    """

    kind = "mlff"

    def __init__(self, config: FusionConfig, seed: int = 0, dtype=np.float32,
                 bn_momentum: float = 0.1, bn_epsilon: float = 1e-5):
        self.config = config
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(self.seed)
        h = config.branch_dim
        self.branches = []
        for c in config.level_dims:
            self.branches.append(
                (Dense(c, h, rng, dtype), BatchNorm1d(h, bn_momentum, bn_epsilon, dtype), ReLU())
            )
        d = config.fused_dim
        self.hidden = Dense(d, d, rng, dtype)
        self.hidden_relu = ReLU()
        self.classifier = Dense(d, config.num_classes, rng, dtype)
        self.adam = AdamState(self.params())

    def forward(self, levels: list[np.ndarray], train: bool = True) -> np.ndarray:
        if len(levels) != self.config.num_levels:
            raise DataError(
                f"expected {self.config.num_levels} levels, got {len(levels)}"
            )
        outs = []
        for x, (dense, bn, relu) in zip(levels, self.branches):
            z = dense.forward(np.ascontiguousarray(x, dtype=self.dtype), train)
            z = bn.forward(z, train)
            outs.append(relu.forward(z, train))
        fused = np.concatenate(outs, axis=1)
        z = self.hidden.forward(fused, train)
        z = self.hidden_relu.forward(z, train)
        return self.classifier.forward(z, train)

    def backward(self, grad_logits: np.ndarray) -> list[np.ndarray]:
        g = self.classifier.backward(grad_logits)
        g = self.hidden_relu.backward(g)
        g = self.hidden.backward(g)
        h = self.config.branch_dim
        grad_levels = []
        for i, (dense, bn, relu) in enumerate(self.branches):
            gi = g[:, i * h : (i + 1) * h]
            gi = relu.backward(gi)
            gi = bn.backward(gi)
            grad_levels.append(dense.backward(gi))
        return grad_levels

    def params(self) -> list[np.ndarray]:
        out = []
        for dense, bn, _ in self.branches:
            out += dense.params() + bn.params()
        out += self.hidden.params() + self.classifier.params()
        return out

    def grads(self) -> list[np.ndarray]:
        out = []
        for dense, bn, _ in self.branches:
            out += dense.grads() + bn.grads()
        out += self.hidden.grads() + self.classifier.grads()
        return out

    def num_params(self) -> int:
        return sum(p.size for p in self.params())


class LinearProbeHead:
    """Single dense layer on the deepest level only."""

    kind = "linear"

    def __init__(self, in_dim: int, num_classes: int, seed: int = 0, dtype=np.float32):
        self.in_dim = int(in_dim)
        self.num_classes = int(num_classes)
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(self.seed)
        self.classifier = Dense(self.in_dim, self.num_classes, rng, dtype)
        self.adam = AdamState(self.params())

    def forward(self, levels: list[np.ndarray], train: bool = True) -> np.ndarray:
        x = np.ascontiguousarray(levels[-1], dtype=self.dtype)
        return self.classifier.forward(x, train)

    def backward(self, grad_logits: np.ndarray) -> list[np.ndarray]:
        return [self.classifier.backward(grad_logits)]

    def params(self) -> list[np.ndarray]:
        return self.classifier.params()

    def grads(self) -> list[np.ndarray]:
        return self.classifier.grads()

    def num_params(self) -> int:
        return sum(p.size for p in self.params())


class MLPProbeHead:
    """dense(in -> hidden) -> ReLU -> dense(hidden -> C) on the deepest level."""

    kind = "mlp"

    def __init__(self, in_dim: int, hidden_dim: int, num_classes: int, seed: int = 0,
                 dtype=np.float32):
        self.in_dim = int(in_dim)
        self.hidden_dim = int(hidden_dim)
        self.num_classes = int(num_classes)
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(self.seed)
        self.hidden = Dense(self.in_dim, self.hidden_dim, rng, dtype)
        self.relu = ReLU()
        self.classifier = Dense(self.hidden_dim, self.num_classes, rng, dtype)
        self.adam = AdamState(self.params())

    def forward(self, levels: list[np.ndarray], train: bool = True) -> np.ndarray:
        x = np.ascontiguousarray(levels[-1], dtype=self.dtype)
        z = self.hidden.forward(x, train)
        z = self.relu.forward(z, train)
        return self.classifier.forward(z, train)

    def backward(self, grad_logits: np.ndarray) -> list[np.ndarray]:
        g = self.classifier.backward(grad_logits)
        g = self.relu.backward(g)
        return [self.hidden.backward(g)]

    def params(self) -> list[np.ndarray]:
        return self.hidden.params() + self.classifier.params()

    def grads(self) -> list[np.ndarray]:
        return self.hidden.grads() + self.classifier.grads()

    def num_params(self) -> int:
        return sum(p.size for p in self.params())


def build_head(config: FusionConfig, seed: int = 0, dtype=np.float32) -> MLFFHead:
    return MLFFHead(config, seed=seed, dtype=dtype)


def build_probe(kind: str, in_dim: int, hidden_dim: int, num_classes: int, seed: int = 0,
                dtype=np.float32):
    if kind == "linear":
        return LinearProbeHead(in_dim, num_classes, seed=seed, dtype=dtype)
    if kind == "mlp":
        return MLPProbeHead(in_dim, hidden_dim, num_classes, seed=seed, dtype=dtype)
    raise ConfigurationError(f"unknown probe kind {kind!r}")


def predict_classes(logits: np.ndarray) -> np.ndarray:
    # argmax breaks ties toward the lowest class index
    return np.argmax(logits, axis=1).astype(np.int64)


def train_epochs(head, levels, labels, *, epochs: int, batch_size: int, lr_max: float,
                 lr_min: float = 0.0, seed: int = 0) -> list[float]:
    """Seeded mini-batch training with a cosine schedule over all steps.

    The last batch of an epoch is dropped when it has fewer than 2 samples
    (batchnorm needs a batch variance).  Returns per-epoch mean losses.
    """
    if epochs < 1:
        raise ConfigurationError(f"epochs must be >= 1, got {epochs}")
    if batch_size < 2:
        raise ConfigurationError(f"batch_size must be >= 2, got {batch_size}")
    levels = check_levels(levels)
    n = levels[0].shape[0]
    labels = check_labels(labels)
    if labels.shape[0] != n:
        raise DataError(f"labels length {labels.shape[0]} != batch {n}")
    steps_per_epoch = n // batch_size + (1 if n % batch_size >= 2 else 0)
    if steps_per_epoch == 0:
        raise ProtocolError(f"dataset of size {n} yields no trainable batch")
    total_steps = epochs * steps_per_epoch
    rng = np.random.default_rng(seed)
    step = 0
    epoch_losses = []
    for _ in range(epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        count = 0
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            if idx.size < 2:
                continue
            batch = [lv[idx] for lv in levels]
            logits = head.forward(batch, train=True)
            loss, grad = softmax_cross_entropy(logits, labels[idx])
            head.backward(grad)
            lr = cosine_lr(step, total_steps, lr_max, lr_min)
            adam_step(head.params(), head.grads(), head.adam, lr)
            step += 1
            loss_sum += loss * idx.size
            count += idx.size
        epoch_losses.append(loss_sum / count)
    return epoch_losses


def param_count(config: FusionConfig) -> dict:
    """Closed-form trainable-parameter count of the fusion head, per block."""
    h = config.branch_dim
    d = config.fused_dim
    c_out = config.num_classes
    branches = {}
    for i, c in enumerate(config.level_dims):
        branches[f"level{i}"] = c * h + h + 2 * h  # dense W+b, bn gamma+beta
    hidden = d * d + d
    classifier = d * c_out + c_out
    total = sum(branches.values()) + hidden + classifier
    return {"branches": branches, "hidden": hidden, "classifier": classifier, "total": total}


def probe_param_count(kind: str, in_dim: int, hidden_dim: int, num_classes: int) -> dict:
    if kind == "linear":
        total = in_dim * num_classes + num_classes
        return {"classifier": total, "total": total}
    if kind == "mlp":
        hidden = in_dim * hidden_dim + hidden_dim
        classifier = hidden_dim * num_classes + num_classes
        return {"hidden": hidden, "classifier": classifier, "total": hidden + classifier}
    raise ConfigurationError(f"unknown probe kind {kind!r}")
