from .layers import BatchNorm1d, Dense, ReLU
from .loss import softmax, softmax_cross_entropy
from .optim import AdamState, adam_step, cosine_lr
from .gradcheck import gradcheck, numeric_gradient, relative_error

__all__ = [
    "Dense",
    "BatchNorm1d",
    "ReLU",
    "softmax",
    "softmax_cross_entropy",
    "AdamState",
    "adam_step",
    "cosine_lr",
    "gradcheck",
    "numeric_gradient",
    "relative_error",
]
