"""Central finite-difference gradient checker.

Every hand-derived backward pass in this package is validated against this
harness; it is the referee for the analytic gradients, so it stays dumb:
perturb one coordinate, evaluate the loss twice, compare.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericError
from .tensor import ParamSet

MAX_COORDS = 500


def grad_check(loss_fn, params: ParamSet, analytic: dict[str, np.ndarray],
               eps: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between analytic gradients and central differences.

    loss_fn takes the ParamSet and returns a scalar; it is re-evaluated with
    single coordinates perturbed by +/-eps. When the parameter set has more
    than MAX_COORDS coordinates, a seed-deterministic subsample is checked.
    Relative error per coordinate is |analytic - numeric| / max(1, |numeric|).
    """
    if not 1e-6 <= eps <= 1e-2:
        raise ValueError("eps must lie in [1e-6, 1e-2]")

    coords: list[tuple[str, int]] = []
    for name in analytic:
        if name not in params:
            raise ValueError(f"analytic gradient for unknown parameter {name!r}")
        if analytic[name].shape != params[name].values.shape:
            raise ValueError(f"analytic gradient shape mismatch for {name!r}")
        coords.extend((name, i) for i in range(params[name].size))

    if len(coords) > MAX_COORDS:
        rng = np.random.Generator(np.random.PCG64(seed))
        chosen = rng.choice(len(coords), size=MAX_COORDS, replace=False)
        coords = [coords[i] for i in sorted(chosen)]

    worst = 0.0
    for name, i in coords:
        flat = params[name].values.reshape(-1)
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(loss_fn(params))
        flat[i] = orig - eps
        f_minus = float(loss_fn(params))
        flat[i] = orig
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise NumericError(f"non-finite loss while perturbing {name}[{i}]")
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = float(analytic[name].reshape(-1)[i])
        err = abs(a - numeric) / max(1.0, abs(numeric))
        if err > worst:
            worst = err
    return worst
