"""Central finite-difference oracle for the analytic loss gradients.

The oracle perturbs inputs in extended precision (``numpy.longdouble``) by
default. In float64 the round-off of a loss of magnitude ~3 divided by
``2h = 2e-6`` is ~1e-10, which is already 1e-4 relative to the smallest
softmax-gradient entries that logits in [-5, 5] produce; extended precision
pushes that floor three orders of magnitude down. The loss functions keep
their input dtype, so they are evaluated end to end at that precision.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ContractError, stream
from .losses import LossKind, LossSpec, softmax

DEFAULT_STEP = 1e-6
SMOOTH_TOL = 1e-5
MAE_TOL = 1e-4


class NonFiniteEvaluation(ArithmeticError):
    def __init__(self, coordinate):
        super().__init__(f"non-finite function value when perturbing {coordinate}")
        self.coordinate = coordinate


@dataclass(frozen=True)
class GradReport:
    max_rel_error: float
    worst_coordinate: tuple[int, int]
    passed: bool
    tolerance: float
    trials: int = 1

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} max_rel_error={self.max_rel_error:.3e} "
                f"(tol {self.tolerance:g}, {self.trials} trials) "
                f"worst coordinate {self.worst_coordinate}")


def finite_diff(f: Callable[[np.ndarray], float], x, step: float = DEFAULT_STEP,
                dtype=np.longdouble) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at matrix ``x``."""
    if not step > 0:
        raise ContractError(f"step must be > 0, got {step}")
    x = np.array(x, dtype=dtype)
    if x.ndim != 2:
        raise ContractError(f"expected a 2-D matrix, got shape {x.shape}")
    grad = np.zeros(x.shape, dtype=np.float64)
    h = dtype(step)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteEvaluation(idx)
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic, numeric) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


def compare(analytic, numeric, tolerance: float) -> GradReport:
    err = relative_error(analytic, numeric)
    worst = np.unravel_index(np.argmax(err), err.shape)
    max_err = float(err[worst])
    return GradReport(max_err, tuple(int(i) for i in worst), max_err < tolerance, tolerance)


def default_tolerance(spec: LossSpec) -> float:
    return MAE_TOL if spec.kind is LossKind.MAE else SMOOTH_TOL


def sample_logits(rng: np.random.Generator, batch: int, num_classes: int,
                  avoid_kinks: float = 0.0) -> np.ndarray:
    """Uniform[-5, 5] logits, redrawn per row until every MAE residual exceeds ``avoid_kinks``."""
    out = rng.uniform(-5, 5, size=(batch, num_classes))
    if avoid_kinks <= 0:
        return out
    for r in range(batch):
        while True:
            q = softmax(out[r:r + 1])[0]
            # residuals are q_i off-target and 1 - q_t on target, for any label
            if q.min() > avoid_kinks and 1 - q.max() > avoid_kinks:
                break
            out[r] = rng.uniform(-5, 5, size=num_classes)
    return out


def check_loss(spec: LossSpec, trials: int = 100, seed: int = 0, batch: int = 8,
               step: float = DEFAULT_STEP, tolerance: float | None = None) -> GradReport:
    """Worst-case analytic-vs-numeric gradient agreement over random draws."""
    if trials < 1:
        raise ContractError(f"trials must be >= 1, got {trials}")
    tol = default_tolerance(spec) if tolerance is None else tolerance
    rng = stream(seed, 0xC4EC)
    avoid = 1e-3 if spec.kind is LossKind.MAE else 0.0
    scale = spec.grad_scale
    worst = GradReport(0.0, (0, 0), True, tol, trials)
    for _ in range(trials):
        logits = sample_logits(rng, batch, spec.num_classes, avoid)
        labels = rng.integers(spec.num_classes, size=batch)
        analytic = spec(logits, labels).grad_logits
        try:
            numeric = finite_diff(lambda z: scale * spec(z, labels).value, logits, step)
        except NonFiniteEvaluation as exc:
            return GradReport(float("inf"), exc.coordinate, False, tol, trials)
        rep = compare(analytic, numeric, tol)
        if rep.max_rel_error > worst.max_rel_error:
            worst = GradReport(rep.max_rel_error, rep.worst_coordinate, rep.passed, tol, trials)
    return worst
