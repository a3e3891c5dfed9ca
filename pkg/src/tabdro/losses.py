"""Reconstruction losses with analytic gradients.

softmax_cross_entropy covers categorical features, mse covers continuous
ones. Both return (loss, gradient-with-respect-to-predictions).
"""

from __future__ import annotations

import numpy as np

from . import kernels


def softmax_cross_entropy(logits: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Stable -log softmax(logits)[target] and its gradient.

    The gradient is softmax(logits) - onehot(target).
    """
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.shape[0] < 2:
        raise ValueError("logits must be a vector of length >= 2")
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    if not 0 <= target < logits.shape[0]:
        raise ValueError(f"target {target} out of range for {logits.shape[0]} classes")
    loss, grad = kernels.softmax_xent(
        logits[None, :], np.array([target], dtype=np.int64), np.ones(1)
    )
    return float(loss[0]), grad[0]


def mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over a vector; gradient is 2*(pred - target)/len."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 1:
        raise ValueError("pred and target must be vectors of equal length")
    n = pred.shape[0]
    diff = pred - target
    loss = 0.0
    for d in diff:  # fixed summation order
        loss += d * d
    loss /= n
    return float(loss), 2.0 * diff / n
