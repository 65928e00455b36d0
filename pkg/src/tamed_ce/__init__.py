"""Tamed cross entropy: a label-noise-robust drop-in for softmax cross entropy."""
from .losses import LossKind, LossOutput, LossSpec, ce, log_softmax, mae_classif, mse_classif, softmax, tce

__all__ = ["LossKind", "LossOutput", "LossSpec", "ce", "log_softmax", "mae_classif",
           "mse_classif", "softmax", "tce"]
__version__ = "0.1.0"
