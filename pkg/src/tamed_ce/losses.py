"""Softmax classification losses with analytic gradients w.r.t. the logits.

Every loss takes a batch of pre-softmax logits (``batch x N``) and integer
labels, and returns a :class:`LossOutput` with the batch-mean value and the
gradient of that mean w.r.t. the logits.

The tamed cross entropy (TCE) is defined through its gradient in
log-likelihood space. For the target class ``t`` with ``s = log q_t``::

    dL/ds = -(1 - s) ** -alpha

and 0 for every other class. Integrating and normalising so the loss is 0 at
``q_t = 1`` gives::

    L(s) = ((1 - s) ** (1 - alpha) - 1) / (1 - alpha)     alpha != 1
    L(s) = log(1 - s)                                      alpha == 1

``alpha = 0`` is exactly the cross entropy ``-s``.

MSE and MAE are adapted to classification by putting a softmax in front and
scaling their gradient by the number of classes. The reported ``value`` is the
plain mean over batch and classes; ``grad_logits`` is the gradient of
``N * value``.

All functions keep the floating dtype of their input, so the finite-difference
oracle can evaluate them in extended precision.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import ContractError, rowwise_max_shift


class LossKind(str, Enum):
    CE = "ce"
    TCE = "tce"
    MSE = "mse"
    MAE = "mae"


@dataclass(frozen=True)
class LossOutput:
    value: float
    grad_logits: np.ndarray


def _logits(a) -> np.ndarray:
    m = np.asarray(a)
    if not np.issubdtype(m.dtype, np.floating):
        m = m.astype(np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ContractError(f"logits must be a nonempty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractError("logits contain non-finite values")
    return m


def _labels(labels, batch: int, num_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.shape != (batch,):
        raise ContractError(f"expected {batch} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise ContractError(f"labels must be integers, got dtype {y.dtype}")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise ContractError(f"label out of range [0, {num_classes})")
    return y


def _one_hot(y: np.ndarray, num_classes: int, dtype) -> np.ndarray:
    out = np.zeros((y.size, num_classes), dtype=dtype)
    out[np.arange(y.size), y] = 1
    return out


def log_softmax(logits) -> np.ndarray:
    o = _logits(logits)
    s = rowwise_max_shift(o)
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


def softmax(logits) -> np.ndarray:
    return np.exp(log_softmax(logits))


# Log-likelihood space ----------------------------------------------------------

def tce_value(log_q, alpha: float):
    """Per-sample TCE loss as a function of the target log-likelihood."""
    u = np.log1p(-np.asarray(log_q))  # log(1 - log q) >= 0
    if alpha == 1:
        return u
    return np.expm1((1 - alpha) * u) / (1 - alpha)


def tce_loglik_grad(log_q, alpha: float):
    """Derivative of :func:`tce_value` w.r.t. the target log-likelihood."""
    return -np.power(1 - np.asarray(log_q), -alpha)


def loglik_grad(log_probs, labels, alpha: float = 0.0) -> np.ndarray:
    """Per-sample gradient of TCE (CE when ``alpha == 0``) w.r.t. ``log q``.

    Nonzero only on the target coordinate of each row.
    """
    lq = np.asarray(log_probs)
    y = _labels(labels, lq.shape[0], lq.shape[1])
    rows = np.arange(y.size)
    out = np.zeros_like(lq)
    out[rows, y] = tce_loglik_grad(lq[rows, y], alpha)
    return out


# Losses on logits --------------------------------------------------------------

def ce(logits, labels) -> LossOutput:
    o = _logits(logits)
    y = _labels(labels, *o.shape)
    lq = log_softmax(o)
    batch = o.shape[0]
    value = -lq[np.arange(batch), y].mean()
    grad = (np.exp(lq) - _one_hot(y, o.shape[1], o.dtype)) / batch
    return LossOutput(value, grad)


def tce(logits, labels, alpha: float) -> LossOutput:
    if not alpha >= 0:
        raise ContractError(f"alpha must be >= 0, got {alpha}")
    o = _logits(logits)
    y = _labels(labels, *o.shape)
    lq = log_softmax(o)
    batch = o.shape[0]
    s = lq[np.arange(batch), y]
    value = tce_value(s, alpha).mean()
    # d s / d o = onehot - q, so d L / d o = -dL/ds * (q - onehot)
    weight = -tce_loglik_grad(s, alpha)
    grad = weight[:, None] * (np.exp(lq) - _one_hot(y, o.shape[1], o.dtype)) / batch
    return LossOutput(value, grad)


def _through_softmax(q: np.ndarray, grad_q: np.ndarray) -> np.ndarray:
    # Jacobian-vector product of softmax: q * (g - <g, q>)
    return q * (grad_q - (grad_q * q).sum(axis=1, keepdims=True))


def mse_classif(logits, labels, num_classes: int | None = None) -> LossOutput:
    o = _logits(logits)
    n = o.shape[1] if num_classes is None else num_classes
    if n != o.shape[1]:
        raise ContractError(f"num_classes={n} but logits have {o.shape[1]} columns")
    y = _labels(labels, o.shape[0], n)
    q = softmax(o)
    r = q - _one_hot(y, n, o.dtype)
    value = (r * r).mean()
    grad_q = 2 * r / o.shape[0]  # gradient of n * value
    return LossOutput(value, _through_softmax(q, grad_q))


def mae_classif(logits, labels, num_classes: int | None = None) -> LossOutput:
    o = _logits(logits)
    n = o.shape[1] if num_classes is None else num_classes
    if n != o.shape[1]:
        raise ContractError(f"num_classes={n} but logits have {o.shape[1]} columns")
    y = _labels(labels, o.shape[0], n)
    q = softmax(o)
    r = q - _one_hot(y, n, o.dtype)
    value = np.abs(r).mean()
    grad_q = np.sign(r) / o.shape[0]  # sign(0) == 0 picks the zero subgradient
    return LossOutput(value, _through_softmax(q, grad_q))


@dataclass(frozen=True)
class LossSpec:
    """A loss choice with its parameters; call it on ``(logits, labels)``."""

    kind: LossKind
    alpha: float = 0.0
    num_classes: int = 10

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", LossKind(self.kind))
        except ValueError:
            raise ContractError(f"unknown loss kind {self.kind!r}") from None
        if not self.alpha >= 0:
            raise ContractError(f"alpha must be >= 0, got {self.alpha}")
        if self.num_classes < 2:
            raise ContractError(f"num_classes must be >= 2, got {self.num_classes}")

    @property
    def label(self) -> str:
        if self.kind is LossKind.TCE:
            return f"tce_{self.alpha:g}"
        return self.kind.value

    @property
    def grad_scale(self) -> int:
        """Factor between ``grad_logits`` and the gradient of ``value``."""
        return self.num_classes if self.kind in (LossKind.MSE, LossKind.MAE) else 1

    def __call__(self, logits, labels) -> LossOutput:
        if self.kind is LossKind.CE:
            return ce(logits, labels)
        if self.kind is LossKind.TCE:
            return tce(logits, labels, self.alpha)
        if self.kind is LossKind.MSE:
            return mse_classif(logits, labels, self.num_classes)
        return mae_classif(logits, labels, self.num_classes)
