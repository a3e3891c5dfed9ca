"""Adam: first-step magnitude, freezing contract, descent, error paths."""

import numpy as np
import pytest

from tabdro.errors import NumericError
from tabdro.optim import AdamState, adam_step
from tabdro.tensor import ParamSet


def _single(value, trainable=True):
    params = ParamSet()
    params.add("x", np.array([value]), trainable=trainable)
    return params


def test_first_step_magnitude_is_lr():
    params = _single(0.0)
    state = AdamState(lr=0.01)
    adam_step(params, {"x": np.array([1.0])}, state)
    delta = params["x"].values[0]
    assert abs(delta + 0.01 * 1.0 / (1.0 + 1e-8)) < 1e-9
    assert state.t == 1


def test_frozen_parameter_never_touched():
    params = _single(1.5, trainable=False)
    before = params["x"].values.copy()
    state = AdamState(lr=0.5)
    adam_step(params, {"x": np.array([100.0])}, state)
    assert np.array_equal(params["x"].values, before)
    assert "x" not in state.m


def test_three_steps_descend_quadratic():
    # f(x) = x^2 from x = 1; gradient 2x.
    params = _single(1.0)
    state = AdamState(lr=0.1)
    values = [1.0]
    for _ in range(3):
        x = params["x"].values[0]
        adam_step(params, {"x": np.array([2.0 * x])}, state)
        values.append(params["x"].values[0])
    fs = [v * v for v in values]
    assert all(b < a for a, b in zip(fs, fs[1:]))
    assert state.t == 3


def test_shape_mismatch_raises():
    params = _single(0.0)
    with pytest.raises(ValueError, match="shape"):
        adam_step(params, {"x": np.zeros(2)}, AdamState())


def test_nonfinite_gradient_names_parameter():
    params = _single(0.0)
    with pytest.raises(NumericError, match="'x'"):
        adam_step(params, {"x": np.array([np.nan])}, AdamState())


def test_missing_gradient_for_trainable_raises():
    params = _single(0.0)
    with pytest.raises(ValueError, match="missing gradient"):
        adam_step(params, {}, AdamState())


def test_state_accumulators_mirror_parameter_shapes():
    params = ParamSet()
    params.add("w", np.zeros((3, 4)))
    state = AdamState()
    adam_step(params, {"w": np.ones((3, 4))}, state)
    assert state.m["w"].shape == (12,)
    assert state.v["w"].shape == (12,)
