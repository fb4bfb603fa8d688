"""Estimator wrappers so the heads compose with the scikit-learn ecosystem.

The fusion classifier takes a *list* of level matrices as X; the probes take
one plain matrix.  Hyperparameters live on ``__init__`` under their own names
so ``get_params``/``set_params``/``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import ProtocolError
from .model import (
    FusionConfig,
    LinearProbeHead,
    MLFFHead,
    MLPProbeHead,
    predict_classes,
    train_epochs,
)
from .nn import softmax
from .validation import check_labels, check_levels, check_matrix


class _TrainedHeadMixin:
    def _check_fitted(self):
        if not hasattr(self, "head_"):
            raise ProtocolError("estimator is not fitted yet; call fit first")

    def decision_function(self, X):
        self._check_fitted()
        return self.head_.forward(self._as_levels(X), train=False)

    def predict(self, X):
        return predict_classes(self.decision_function(X))

    def predict_proba(self, X):
        return softmax(self.decision_function(X))


class MLFFClassifier(_TrainedHeadMixin, ClassifierMixin, BaseEstimator):
    """Multi-level feature-fusion classification head on frozen embeddings.

    X is a list of per-level matrices (B, c_n), shallowest level first.
    """

    def __init__(self, fused_dim=0, epochs=30, batch_size=32, lr_max=1e-3, lr_min=0.0,
                 seed=0):
        self.fused_dim = fused_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_max = lr_max
        self.lr_min = lr_min
        self.seed = seed

    def _as_levels(self, X):
        return check_levels(X, level_dims=getattr(self, "level_dims_", None))

    def fit(self, X, y):
        levels = check_levels(X)
        y = check_labels(y)
        self.classes_ = np.unique(y)
        config = FusionConfig(
            level_dims=tuple(m.shape[1] for m in levels),
            num_classes=int(y.max()) + 1,
            fused_dim=self.fused_dim,
        )
        self.level_dims_ = config.level_dims
        self.config_ = config
        self.head_ = MLFFHead(config, seed=self.seed)
        self.loss_trace_ = train_epochs(
            self.head_, levels, y,
            epochs=self.epochs, batch_size=self.batch_size,
            lr_max=self.lr_max, lr_min=self.lr_min, seed=self.seed,
        )
        return self


class _ProbeBase(_TrainedHeadMixin, ClassifierMixin, BaseEstimator):
    def _as_levels(self, X):
        return [check_matrix(X)]

    def _train(self, head, X, y):
        self.head_ = head
        self.loss_trace_ = train_epochs(
            head, [X], y,
            epochs=self.epochs, batch_size=self.batch_size,
            lr_max=self.lr_max, lr_min=self.lr_min, seed=self.seed,
        )
        return self


class LinearProbe(_ProbeBase):
    """Single affine layer on one (usually the deepest) representation."""

    def __init__(self, epochs=30, batch_size=32, lr_max=1e-3, lr_min=0.0, seed=0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_max = lr_max
        self.lr_min = lr_min
        self.seed = seed

    def fit(self, X, y):
        X = check_matrix(X)
        y = check_labels(y)
        self.classes_ = np.unique(y)
        head = LinearProbeHead(X.shape[1], int(y.max()) + 1, seed=self.seed)
        return self._train(head, X, y)


class MLPProbe(_ProbeBase):
    """dense -> ReLU -> dense on one representation; hidden defaults to the input dim."""

    def __init__(self, hidden_dim=0, epochs=30, batch_size=32, lr_max=1e-3, lr_min=0.0,
                 seed=0):
        self.hidden_dim = hidden_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_max = lr_max
        self.lr_min = lr_min
        self.seed = seed

    def fit(self, X, y):
        X = check_matrix(X)
        y = check_labels(y)
        self.classes_ = np.unique(y)
        hidden = self.hidden_dim if self.hidden_dim else X.shape[1]
        head = MLPProbeHead(X.shape[1], hidden, int(y.max()) + 1, seed=self.seed)
        return self._train(head, X, y)
