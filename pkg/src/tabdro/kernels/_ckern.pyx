# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numeric kernels.

Every reduction runs in a fixed sequential order (ascending index), so two
runs with identical inputs produce bit-identical outputs. Keep the loop
structure in sync with the numpy backend in ``pykern.py``: both must compute
the same quantities, though they may differ in floating-point rounding.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt, tanh

cnp.import_array()

DEF GELU_S = 0.7978845608028654    # sqrt(2/pi)
DEF GELU_A = 0.044715


def matmul(double[:, ::1] a, double[:, ::1] b):
    """C = A @ B with sequential accumulation over the inner dimension."""
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    if b.shape[0] != k:
        raise ValueError("matmul: inner dimensions differ")
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, j, p
    cdef double aip
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            for j in range(n):
                c[i, j] += aip * b[p, j]
    return out


def matmul_at_b(double[:, ::1] a, double[:, ::1] b):
    """C = A.T @ B (gradient of weights: inputs.T @ upstream)."""
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    if b.shape[0] != m:
        raise ValueError("matmul_at_b: leading dimensions differ")
    out = np.zeros((k, n), dtype=np.float64)
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, j, p
    cdef double aip
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            for j in range(n):
                c[p, j] += aip * b[i, j]
    return out


def matmul_a_bt(double[:, ::1] a, double[:, ::1] b):
    """C = A @ B.T (gradient of inputs: upstream @ weights.T)."""
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[0]
    if b.shape[1] != k:
        raise ValueError("matmul_a_bt: trailing dimensions differ")
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, j, p
    cdef double acc
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += a[i, p] * b[j, p]
            c[i, j] = acc
    return out


def bmm_nn(double[:, :, ::1] a, double[:, :, ::1] b):
    """Batched C[i] = A[i] @ B[i]."""
    cdef Py_ssize_t nb = a.shape[0], m = a.shape[1], k = a.shape[2], n = b.shape[2]
    if b.shape[0] != nb or b.shape[1] != k:
        raise ValueError("bmm_nn: shape mismatch")
    out = np.zeros((nb, m, n), dtype=np.float64)
    cdef double[:, :, ::1] c = out
    cdef Py_ssize_t s, i, j, p
    cdef double aip
    for s in range(nb):
        for i in range(m):
            for p in range(k):
                aip = a[s, i, p]
                for j in range(n):
                    c[s, i, j] += aip * b[s, p, j]
    return out


def bmm_nt(double[:, :, ::1] a, double[:, :, ::1] b):
    """Batched C[i] = A[i] @ B[i].T."""
    cdef Py_ssize_t nb = a.shape[0], m = a.shape[1], k = a.shape[2], n = b.shape[1]
    if b.shape[0] != nb or b.shape[2] != k:
        raise ValueError("bmm_nt: shape mismatch")
    out = np.zeros((nb, m, n), dtype=np.float64)
    cdef double[:, :, ::1] c = out
    cdef Py_ssize_t s, i, j, p
    cdef double acc
    for s in range(nb):
        for i in range(m):
            for j in range(n):
                acc = 0.0
                for p in range(k):
                    acc += a[s, i, p] * b[s, j, p]
                c[s, i, j] = acc
    return out


def bmm_tn(double[:, :, ::1] a, double[:, :, ::1] b):
    """Batched C[i] = A[i].T @ B[i]."""
    cdef Py_ssize_t nb = a.shape[0], m = a.shape[1], k = a.shape[2], n = b.shape[2]
    if b.shape[0] != nb or b.shape[1] != m:
        raise ValueError("bmm_tn: shape mismatch")
    out = np.zeros((nb, k, n), dtype=np.float64)
    cdef double[:, :, ::1] c = out
    cdef Py_ssize_t s, i, j, p
    cdef double aip
    for s in range(nb):
        for i in range(m):
            for p in range(k):
                aip = a[s, i, p]
                for j in range(n):
                    c[s, p, j] += aip * b[s, i, j]
    return out


def colsum(double[:, ::1] a):
    """Column sums accumulated over rows in ascending order."""
    cdef Py_ssize_t m = a.shape[0], n = a.shape[1]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] c = out
    cdef Py_ssize_t i, j
    for i in range(m):
        for j in range(n):
            c[j] += a[i, j]
    return out


def gelu_fwd(double[:, ::1] x):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    cdef double v, u
    for i in range(m):
        for j in range(n):
            v = x[i, j]
            u = GELU_S * (v + GELU_A * v * v * v)
            y[i, j] = 0.5 * v * (1.0 + tanh(u))
    return out


def gelu_bwd(double[:, ::1] x, double[:, ::1] dy):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    if dy.shape[0] != m or dy.shape[1] != n:
        raise ValueError("gelu_bwd: shape mismatch")
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] dx = out
    cdef Py_ssize_t i, j
    cdef double v, u, t, sech2, d
    for i in range(m):
        for j in range(n):
            v = x[i, j]
            u = GELU_S * (v + GELU_A * v * v * v)
            t = tanh(u)
            sech2 = 1.0 - t * t
            d = 0.5 * (1.0 + t) + 0.5 * v * sech2 * GELU_S * (1.0 + 3.0 * GELU_A * v * v)
            dx[i, j] = d * dy[i, j]
    return out


def softmax_xent(double[:, ::1] logits, long[::1] targets, double[::1] weights):
    """Per-row weighted cross-entropy with numerically stable softmax.

    Returns (loss[m], dlogits[m, C]); both already scaled by the row weight.
    """
    cdef Py_ssize_t m = logits.shape[0], nc = logits.shape[1]
    if targets.shape[0] != m or weights.shape[0] != m:
        raise ValueError("softmax_xent: row count mismatch")
    loss_out = np.empty(m, dtype=np.float64)
    grad_out = np.empty((m, nc), dtype=np.float64)
    cdef double[::1] loss = loss_out
    cdef double[:, ::1] grad = grad_out
    cdef Py_ssize_t i, j
    cdef long t
    cdef double mx, z, w, p
    for i in range(m):
        t = targets[i]
        if t < 0 or t >= nc:
            raise ValueError("softmax_xent: target index out of range")
        w = weights[i]
        mx = logits[i, 0]
        for j in range(1, nc):
            if logits[i, j] > mx:
                mx = logits[i, j]
        z = 0.0
        for j in range(nc):
            z += exp(logits[i, j] - mx)
        loss[i] = w * (log(z) - (logits[i, t] - mx))
        for j in range(nc):
            p = exp(logits[i, j] - mx) / z
            grad[i, j] = w * p
        grad[i, t] -= w
    return loss_out, grad_out


def softmax_rows(double[:, :, ::1] s):
    """Row-wise stable softmax over the last axis of a 3-D array."""
    cdef Py_ssize_t nb = s.shape[0], m = s.shape[1], n = s.shape[2]
    out = np.empty((nb, m, n), dtype=np.float64)
    cdef double[:, :, ::1] a = out
    cdef Py_ssize_t b, i, j
    cdef double mx, z
    for b in range(nb):
        for i in range(m):
            mx = s[b, i, 0]
            for j in range(1, n):
                if s[b, i, j] > mx:
                    mx = s[b, i, j]
            z = 0.0
            for j in range(n):
                a[b, i, j] = exp(s[b, i, j] - mx)
                z += a[b, i, j]
            for j in range(n):
                a[b, i, j] /= z
    return out


def softmax_rows_bwd(double[:, :, ::1] a, double[:, :, ::1] da):
    """Backward of row-wise softmax: dS = A * (dA - sum(dA * A, rows))."""
    cdef Py_ssize_t nb = a.shape[0], m = a.shape[1], n = a.shape[2]
    if da.shape[0] != nb or da.shape[1] != m or da.shape[2] != n:
        raise ValueError("softmax_rows_bwd: shape mismatch")
    out = np.empty((nb, m, n), dtype=np.float64)
    cdef double[:, :, ::1] ds = out
    cdef Py_ssize_t b, i, j
    cdef double dot
    for b in range(nb):
        for i in range(m):
            dot = 0.0
            for j in range(n):
                dot += da[b, i, j] * a[b, i, j]
            for j in range(n):
                ds[b, i, j] = a[b, i, j] * (da[b, i, j] - dot)
    return out


def scatter_add_rows(double[:, ::1] table, long[::1] idx, double[:, ::1] rows):
    """table[idx[i]] += rows[i], accumulated in ascending i (in place)."""
    cdef Py_ssize_t m = idx.shape[0], d = rows.shape[1], v = table.shape[0]
    if rows.shape[0] != m or table.shape[1] != d:
        raise ValueError("scatter_add_rows: shape mismatch")
    cdef Py_ssize_t i, j
    cdef long r
    for i in range(m):
        r = idx[i]
        if r < 0 or r >= v:
            raise ValueError("scatter_add_rows: index out of range")
        for j in range(d):
            table[r, j] += rows[i, j]


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                long t, double lr, double beta1, double beta2, double eps):
    """Bias-corrected Adam step, applied in place to p, m and v."""
    cdef Py_ssize_t n = p.shape[0]
    if g.shape[0] != n or m.shape[0] != n or v.shape[0] != n:
        raise ValueError("adam_update: shape mismatch")
    cdef double bc1 = 1.0 - beta1 ** t
    cdef double bc2 = 1.0 - beta2 ** t
    cdef Py_ssize_t i
    cdef double mhat, vhat
    for i in range(n):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        mhat = m[i] / bc1
        vhat = v[i] / bc2
        p[i] -= lr * mhat / (sqrt(vhat) + eps)
