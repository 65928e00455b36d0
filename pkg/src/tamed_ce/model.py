"""Fully-connected ReLU classifier and Nesterov SGD.

The network returns pre-softmax logits; the losses own the softmax.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ContractError


class Mlp:
    """ReLU MLP with widths ``[input, hidden..., classes]``.

    Weights are stored as ``(fan_in, fan_out)`` so a layer is ``x @ W + b``.
    """

    def __init__(self, widths, rng: np.random.Generator | None = None):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ContractError(f"need at least input and output widths >= 1, got {widths}")
        self.widths = widths
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            if rng is None:
                w = np.zeros((fan_in, fan_out))
            else:
                w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]`` (views, mutable in place)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def decay_mask(self) -> list[bool]:
        # Biases are excluded from weight decay.
        return [i % 2 == 0 for i in range(2 * len(self.weights))]

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.widths[0]:
            raise ContractError(f"input must be (batch, {self.widths[0]}), got {x.shape}")
        return x

    def forward(self, x, keep: bool = False):
        """Return logits, or ``(logits, activations)`` when ``keep`` is set.

        ``activations[i]`` is the input of layer ``i`` (post-ReLU for hidden layers).
        """
        a = self._check_input(x)
        acts = [a]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == last else np.maximum(z, 0.0)
            acts.append(a)
        return (a, acts) if keep else a

    def backward(self, x, grad_logits, activations=None) -> list[np.ndarray]:
        """Gradients of the loss w.r.t. ``params`` given ``d loss / d logits``.

        ``grad_logits`` already carries the batch-mean factor, so nothing is
        averaged here.
        """
        if activations is None:
            _, activations = self.forward(x, keep=True)
        g = np.asarray(grad_logits, dtype=np.float64)
        if g.shape != activations[-1].shape:
            raise ContractError(f"grad_logits shape {g.shape} != logits shape {activations[-1].shape}")
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = activations[i]
            grads[2 * i] = a_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (a_in > 0)
        return grads


@dataclass
class LrSchedule:
    """Piecewise-constant step schedule: divide by ``drop_factor`` at each drop epoch."""

    initial: float = 0.1
    drop_epochs: tuple[int, ...] = (30, 45)
    drop_factor: float = 10.0

    def __call__(self, epoch: int) -> float:
        drops = sum(1 for d in self.drop_epochs if d <= epoch)
        return self.initial / self.drop_factor ** drops


@dataclass
class Sgd:
    """SGD with Nesterov momentum and L2 weight decay folded into the gradient.

    Per parameter::

        g <- g + weight_decay * p        (decayed parameters only)
        v <- momentum * v + g
        p <- p - lr * (g + momentum * v)
    """

    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    velocity: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.lr > 0:
            raise ContractError(f"learning rate must be > 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ContractError(f"momentum must be in [0, 1), got {self.momentum}")
        if not self.weight_decay >= 0:
            raise ContractError(f"weight decay must be >= 0, got {self.weight_decay}")

    def step(self, params, grads, decay_mask=None):
        """Update ``params`` in place."""
        if len(params) != len(grads):
            raise ContractError("params and grads differ in length")
        if not self.velocity:
            self.velocity = [np.zeros_like(p) for p in params]
        if decay_mask is None:
            decay_mask = [True] * len(params)
        for p, g, v, decay in zip(params, grads, self.velocity, decay_mask):
            if p.shape != g.shape:
                raise ContractError(f"param shape {p.shape} != grad shape {g.shape}")
            if decay and self.weight_decay:
                g = g + self.weight_decay * p
            v *= self.momentum
            v += g
            p -= self.lr * (g + self.momentum * v)
        return params
