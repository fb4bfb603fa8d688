"""Adam with bias correction and the cosine-annealing schedule."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigurationError, ProtocolError


class AdamState:
    """First/second moment accumulators for a fixed list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        if not 0.0 < beta1 < 1.0 or not 0.0 < beta2 < 1.0:
            raise ConfigurationError("betas must be in (0,1)")
        if epsilon <= 0.0:
            raise ConfigurationError("epsilon must be positive")
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float) -> AdamState:
    """One bias-corrected Adam step; parameters are updated in place."""
    if lr < 0.0:
        raise ConfigurationError(f"lr must be >= 0, got {lr}")
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ConfigurationError("params/grads/state length mismatch")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ConfigurationError(f"grad shape {g.shape} != param shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= (lr * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(p.dtype)
    return state


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float = 0.0) -> float:
    """Cosine annealing from lr_max (step 0) down to lr_min (step total_steps)."""
    if total_steps < 1:
        raise ConfigurationError(f"total_steps must be >= 1, got {total_steps}")
    if step < 0 or step > total_steps:
        raise ProtocolError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))
