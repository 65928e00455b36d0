import numpy as np
import pytest

from tamed_ce.core import ContractError, stream
from tamed_ce.gradcheck import (NonFiniteEvaluation, check_loss, compare, finite_diff,
                                relative_error, sample_logits)
from tamed_ce.losses import LossSpec, ce, softmax, tce


def test_finite_diff_quadratic():
    g = finite_diff(lambda x: float((x ** 2).sum()), [[1.0, 2.0]], 1e-6)
    np.testing.assert_allclose(g, [[2.0, 4.0]], atol=1e-6)


def test_finite_diff_float64_mode():
    g = finite_diff(lambda x: float((x ** 3).sum()), [[1.0, -2.0]], 1e-4, dtype=np.float64)
    np.testing.assert_allclose(g, [[3.0, 12.0]], rtol=1e-6)


def test_finite_diff_bad_step():
    with pytest.raises(ContractError):
        finite_diff(lambda x: 0.0, [[1.0]], 0.0)


def test_finite_diff_reports_non_finite_coordinate():
    def f(x):
        return np.log(x[0, 1])  # log of a non-positive number is not finite
    with np.errstate(divide="ignore", invalid="ignore"), pytest.raises(NonFiniteEvaluation) as exc:
        finite_diff(f, [[1.0, 0.0]], 1e-3)
    assert exc.value.coordinate == (0, 0)


def test_ce_cross_module():
    rng = stream(0)
    o, y = rng.uniform(-5, 5, (4, 6)), rng.integers(6, size=4)
    num = finite_diff(lambda z: ce(z, y).value, o)
    assert compare(ce(o, y).grad_logits, num, 1e-5).passed


def test_tce_cross_module():
    rng = stream(1)
    o, y = rng.uniform(-5, 5, (4, 6)), rng.integers(6, size=4)
    num = finite_diff(lambda z: tce(z, y, 2.0).value, o)
    assert compare(tce(o, y, 2.0).grad_logits, num, 1e-5).passed


def test_relative_error_metric():
    assert relative_error(1.0, 1.0) == 0
    assert relative_error(0.0, 0.0) == 0
    assert relative_error(1e-12, 0.0) == pytest.approx(1e-4)
    assert relative_error(2.0, 1.0) == pytest.approx(1 / 3)


def test_compare_reports_worst():
    rep = compare(np.array([[1.0, 1.0]]), np.array([[1.0, 2.0]]), 1e-5)
    assert rep.worst_coordinate == (0, 1) and not rep.passed


def test_kink_avoidance_sampling():
    logits = sample_logits(stream(2), 50, 10, avoid_kinks=1e-3)
    q = softmax(logits)
    assert q.min() > 1e-3 and (1 - q.max(axis=1)).min() > 1e-3


@pytest.mark.parametrize("spec", [LossSpec("ce"), LossSpec("tce", 1.5), LossSpec("mse"),
                                  LossSpec("mae", num_classes=4)])
def test_check_loss_quick(spec):
    rep = check_loss(spec, trials=5, seed=3)
    assert rep.passed, rep


def test_check_loss_detects_wrong_gradient():
    class Wrong(LossSpec):
        def __call__(self, logits, labels):
            out = super().__call__(logits, labels)
            return type(out)(out.value, 1.01 * out.grad_logits)
    rep = check_loss(Wrong("ce"), trials=2)
    assert not rep.passed and rep.max_rel_error > 1e-3


def test_check_loss_needs_trials():
    with pytest.raises(ContractError):
        check_loss(LossSpec("ce"), trials=0)
