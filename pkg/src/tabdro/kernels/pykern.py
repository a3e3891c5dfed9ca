"""Pure-numpy fallback for the compiled kernels.

Mirrors every function in ``_ckern.pyx``. Matrix products go through BLAS, so
results can differ from the compiled backend in the last few ulps, but each
backend is deterministic run-to-run on a fixed machine.
"""

from __future__ import annotations

import numpy as np

_GELU_S = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def matmul(a, b):
    if a.shape[1] != b.shape[0]:
        raise ValueError("matmul: inner dimensions differ")
    return a @ b


def matmul_at_b(a, b):
    if a.shape[0] != b.shape[0]:
        raise ValueError("matmul_at_b: leading dimensions differ")
    return a.T @ b


def matmul_a_bt(a, b):
    if a.shape[1] != b.shape[1]:
        raise ValueError("matmul_a_bt: trailing dimensions differ")
    return a @ b.T


def bmm_nn(a, b):
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ValueError("bmm_nn: shape mismatch")
    return a @ b


def bmm_nt(a, b):
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ValueError("bmm_nt: shape mismatch")
    return a @ b.transpose(0, 2, 1)


def bmm_tn(a, b):
    if a.shape[0] != b.shape[0] or a.shape[1] != b.shape[1]:
        raise ValueError("bmm_tn: shape mismatch")
    return a.transpose(0, 2, 1) @ b


def colsum(a):
    return a.sum(axis=0)


def gelu_fwd(x):
    u = _GELU_S * (x + _GELU_A * x**3)
    return 0.5 * x * (1.0 + np.tanh(u))


def gelu_bwd(x, dy):
    if x.shape != dy.shape:
        raise ValueError("gelu_bwd: shape mismatch")
    u = _GELU_S * (x + _GELU_A * x**3)
    t = np.tanh(u)
    d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_S * (1.0 + 3.0 * _GELU_A * x * x)
    return d * dy


def softmax_xent(logits, targets, weights):
    m, nc = logits.shape
    if targets.shape[0] != m or weights.shape[0] != m:
        raise ValueError("softmax_xent: row count mismatch")
    if targets.min() < 0 or targets.max() >= nc:
        raise ValueError("softmax_xent: target index out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    z = ex.sum(axis=1)
    rows = np.arange(m)
    loss = weights * (np.log(z) - shifted[rows, targets])
    grad = ex / z[:, None] * weights[:, None]
    grad[rows, targets] -= weights
    return loss, grad


def softmax_rows(s):
    shifted = s - s.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def softmax_rows_bwd(a, da):
    if a.shape != da.shape:
        raise ValueError("softmax_rows_bwd: shape mismatch")
    dot = (da * a).sum(axis=-1, keepdims=True)
    return a * (da - dot)


def scatter_add_rows(table, idx, rows):
    if rows.shape[0] != idx.shape[0] or table.shape[1] != rows.shape[1]:
        raise ValueError("scatter_add_rows: shape mismatch")
    if idx.shape[0] and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ValueError("scatter_add_rows: index out of range")
    np.add.at(table, idx, rows)


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    if not (p.shape == g.shape == m.shape == v.shape):
        raise ValueError("adam_update: shape mismatch")
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
