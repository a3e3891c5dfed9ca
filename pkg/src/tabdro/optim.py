"""Adam optimizer over named parameter sets.

Frozen tensors (trainable=False) are never written to, which is what the
fine-tuning stages rely on for their bit-exactness guarantees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NumericError
from .tensor import ParamSet


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ParamSet, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, in place on the trainable tensors."""
    state.t += 1
    for name, p in params.tensors.items():
        if not p.trainable:
            continue
        if name not in grads:
            raise ValueError(f"missing gradient for trainable parameter {name!r}")
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.values.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter {name!r} shape {p.values.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros(p.size, dtype=np.float64)
            state.v[name] = np.zeros(p.size, dtype=np.float64)
        kernels.adam_update(
            p.values.reshape(-1),
            np.ascontiguousarray(g.reshape(-1)),
            state.m[name],
            state.v[name],
            state.t,
            state.lr,
            state.beta1,
            state.beta2,
            state.eps,
        )
