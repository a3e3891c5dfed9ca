"""Loss functions against hand-computed values and finite differences.

The finite-difference helper here is local on purpose: it must stay
independent of gradcheck.py, which these same losses later validate.
"""

import math

import numpy as np
import pytest

from tabdro.losses import mse, softmax_cross_entropy

# Independent evaluation of -log(e^2 / (e^1 + e^2 + e^0.5)), frozen.
CE_1_2_05_TARGET1 = 0.4643687841079447


def _central_diff(fn, x, eps=1e-6):
    grad = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += eps
        xm[i] -= eps
        grad[i] = (fn(xp) - fn(xm)) / (2 * eps)
    return grad


def test_ce_uniform_two_classes():
    loss, grad = softmax_cross_entropy(np.array([0.0, 0.0]), 0)
    assert abs(loss - math.log(2.0)) < 1e-12
    np.testing.assert_allclose(grad, [-0.5, 0.5], atol=1e-12)


def test_ce_near_certain():
    loss, _ = softmax_cross_entropy(np.array([10.0, -10.0]), 0)
    assert loss < 1e-6


def test_ce_frozen_oracle_value_and_gradient():
    logits = np.array([1.0, 2.0, 0.5])
    loss, grad = softmax_cross_entropy(logits, 1)
    assert abs(loss - CE_1_2_05_TARGET1) < 1e-12
    numeric = _central_diff(lambda x: softmax_cross_entropy(x, 1)[0], logits)
    np.testing.assert_allclose(grad, numeric, rtol=1e-6, atol=1e-9)


def test_ce_gradient_sums_to_zero_and_shift_invariance():
    rng = np.random.default_rng(5)
    for _ in range(50):
        c = int(rng.integers(2, 9))
        logits = rng.normal(scale=3.0, size=c)
        target = int(rng.integers(0, c))
        loss, grad = softmax_cross_entropy(logits, target)
        assert abs(grad.sum()) < 1e-12
        shifted, _ = softmax_cross_entropy(logits + 17.3, target)
        assert abs(loss - shifted) < 1e-9


def test_ce_errors():
    with pytest.raises(ValueError):
        softmax_cross_entropy(np.array([1.0, 2.0]), 2)
    with pytest.raises(ValueError):
        softmax_cross_entropy(np.array([1.0, 2.0]), -1)
    with pytest.raises(ValueError):
        softmax_cross_entropy(np.array([3.0]), 0)
    with pytest.raises(ValueError):
        softmax_cross_entropy(np.array([np.inf, 0.0]), 0)


def test_mse_exact_cases():
    loss, grad = mse(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
    assert loss == 0.0
    np.testing.assert_array_equal(grad, [0.0, 0.0])
    loss, _ = mse(np.array([1.0, 3.0]), np.array([0.0, 0.0]))
    assert abs(loss - 5.0) < 1e-15


def test_mse_gradient_matches_finite_differences():
    rng = np.random.default_rng(9)
    pred = rng.normal(size=7)
    target = rng.normal(size=7)
    _, grad = mse(pred, target)
    numeric = _central_diff(lambda x: mse(x, target)[0], pred)
    np.testing.assert_allclose(grad, numeric, rtol=1e-6, atol=1e-9)


def test_mse_length_mismatch():
    with pytest.raises(ValueError):
        mse(np.array([1.0, 2.0]), np.array([1.0]))
