"""Dense / batchnorm / ReLU layers with explicit forward and backward passes.

Layers are plain objects holding float32 parameters (float64 in gradient-check
mode) and the caches needed by ``backward``.  There is no autodiff graph: the
trainable surface is small enough that hand-written gradients stay readable
and exactly testable against finite differences.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, NumericError, ProtocolError


def _check_finite(x: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{name} contains NaN or Inf")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    # uniform in +-sqrt(6 / (fan_in + fan_out)), seeded
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


class Dense:
    """Affine layer: y = x @ W + b."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        if in_dim < 1 or out_dim < 1:
            raise ConfigurationError(f"Dense dims must be >= 1, got {in_dim}x{out_dim}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.weight = glorot_uniform(rng, in_dim, out_dim, dtype)
        self.bias = np.zeros(out_dim, dtype=dtype)
        self.grad_weight = None
        self.grad_bias = None
        self._x = None

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.weight.shape[0]:
            raise ConfigurationError(
                f"Dense expects (B, {self.weight.shape[0]}), got {x.shape}"
            )
        _check_finite(x, "Dense input")
        if train:
            self._x = x
        return x @ self.weight + self.bias

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise ProtocolError("Dense.backward called before forward")
        self.grad_weight = self._x.T @ grad_out
        self.grad_bias = grad_out.sum(axis=0)
        return grad_out @ self.weight.T

    def params(self) -> list[np.ndarray]:
        return [self.weight, self.bias]

    def grads(self) -> list[np.ndarray]:
        return [self.grad_weight, self.grad_bias]


class BatchNorm1d:
    """Per-feature batch normalization with an affine tail.

    Train mode normalizes with the biased (1/B) batch variance; the running
    variance is updated with the unbiased estimate.  Running stats follow
    r <- (1 - momentum) * r + momentum * batch_stat.
    """

    def __init__(self, num_features: int, momentum: float = 0.1, epsilon: float = 1e-5,
                 dtype=np.float32):
        if not 0.0 < momentum < 1.0:
            raise ConfigurationError(f"momentum must be in (0,1), got {momentum}")
        if epsilon <= 0.0:
            raise ConfigurationError(f"epsilon must be positive, got {epsilon}")
        self.num_features = num_features
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = np.ones(num_features, dtype=dtype)
        self.beta = np.zeros(num_features, dtype=dtype)
        self.running_mean = np.zeros(num_features, dtype=dtype)
        self.running_var = np.ones(num_features, dtype=dtype)
        self.grad_gamma = None
        self.grad_beta = None
        self._x_norm = None
        self._inv_std = None

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.num_features:
            raise ConfigurationError(
                f"BatchNorm1d expects (B, {self.num_features}), got {x.shape}"
            )
        _check_finite(x, "BatchNorm1d input")
        if train:
            b = x.shape[0]
            if b < 2:
                raise ProtocolError("BatchNorm1d train mode needs batch size >= 2")
            mean = x.mean(axis=0)
            var = ((x - mean) ** 2).mean(axis=0)  # biased
            inv_std = 1.0 / np.sqrt(var + self.epsilon)
            x_norm = (x - mean) * inv_std
            self._x_norm = x_norm
            self._inv_std = inv_std
            unbiased = var * (b / (b - 1.0))
            m = self.momentum
            self.running_mean = ((1.0 - m) * self.running_mean + m * mean).astype(
                self.running_mean.dtype
            )
            self.running_var = ((1.0 - m) * self.running_var + m * unbiased).astype(
                self.running_var.dtype
            )
            return self.gamma * x_norm + self.beta
        x_norm = (x - self.running_mean) / np.sqrt(self.running_var + self.epsilon)
        return self.gamma * x_norm + self.beta

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._x_norm is None:
            raise ProtocolError("BatchNorm1d.backward called before a train forward")
        x_norm = self._x_norm
        b = x_norm.shape[0]
        self.grad_gamma = (grad_out * x_norm).sum(axis=0)
        self.grad_beta = grad_out.sum(axis=0)
        g = grad_out * self.gamma
        return (self._inv_std / b) * (b * g - g.sum(axis=0) - x_norm * (g * x_norm).sum(axis=0))

    def params(self) -> list[np.ndarray]:
        return [self.gamma, self.beta]

    def grads(self) -> list[np.ndarray]:
        return [self.grad_gamma, self.grad_beta]


class ReLU:
    """Elementwise max(0, x); subgradient at 0 is 0."""

    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if train:
            self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise ProtocolError("ReLU.backward called before forward")
        return grad_out * self._mask

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []
