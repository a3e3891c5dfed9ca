"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the numpy
fallback is used. Override with TABDRO_KERNELS=compiled|python (``compiled``
raises if the extension is missing, so misconfiguration fails loudly).
"""

from __future__ import annotations

import os

_requested = os.environ.get("TABDRO_KERNELS", "auto").lower()

if _requested not in ("auto", "compiled", "python"):
    raise ValueError(f"TABDRO_KERNELS must be auto, compiled or python, got {_requested!r}")

if _requested == "python":
    from . import pykern as _impl

    BACKEND = "python"
else:
    try:
        from . import _ckern as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from . import pykern as _impl  # type: ignore[no-redef]

        BACKEND = "python"

matmul = _impl.matmul
matmul_at_b = _impl.matmul_at_b
matmul_a_bt = _impl.matmul_a_bt
bmm_nn = _impl.bmm_nn
bmm_nt = _impl.bmm_nt
bmm_tn = _impl.bmm_tn
colsum = _impl.colsum
gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
softmax_xent = _impl.softmax_xent
softmax_rows = _impl.softmax_rows
softmax_rows_bwd = _impl.softmax_rows_bwd
scatter_add_rows = _impl.scatter_add_rows
adam_update = _impl.adam_update

__all__ = [
    "BACKEND",
    "matmul",
    "matmul_at_b",
    "matmul_a_bt",
    "bmm_nn",
    "bmm_nt",
    "bmm_tn",
    "colsum",
    "gelu_fwd",
    "gelu_bwd",
    "softmax_xent",
    "softmax_rows",
    "softmax_rows_bwd",
    "scatter_add_rows",
    "adam_update",
]
