import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from config.errors import InversionError
from config.terminal_logger import terminal_logger
from engines.limits import ExponentialUnit
from tools.inversion import (
    Analyticity,
    Method,
    TransformHandle,
    euler_weights,
    invert_cdf,
    invert_cdf_raw,
    sup_distance,
)

Y_GRID = np.geomspace(0.1, 10.0, 50)


def exponential_handle(analyticity=Analyticity.CUT_PLANE):
    return TransformHandle(evaluator=lambda p: 1.0 / (1.0 + p), analyticity=analyticity,
                           extended_evaluator=lambda p: 1 / (1 + p), label="exp(1)")


def test_talbot_inverts_exponential_on_the_grid():
    handle = ExponentialUnit().handle()
    assert handle.default_method() == Method.TALBOT
    for y in Y_GRID:
        assert invert_cdf(handle, y) == pytest.approx(-math.expm1(-y), abs=1e-6)


def test_euler_inverts_exponential():
    handle = exponential_handle(Analyticity.RIGHT_HALF_PLANE)
    assert handle.default_method() == Method.EULER
    for y in (0.1, 1.0, 10.0):
        assert invert_cdf(handle, y) == pytest.approx(-math.expm1(-y), abs=1e-6)


def test_stehfest_inverts_exponential():
    handle = exponential_handle(Analyticity.REAL_AXIS)
    for y in (0.5, 1.0, 2.0):
        assert invert_cdf(handle, y) == pytest.approx(-math.expm1(-y), abs=1e-3)


@given(y=st.floats(min_value=0.1, max_value=10.0))
def test_talbot_and_euler_agree(y):
    talbot = invert_cdf(exponential_handle(), y, Method.TALBOT)
    euler = invert_cdf(exponential_handle(), y, Method.EULER)
    assert talbot == pytest.approx(euler, abs=1e-6)


def test_inadmissible_method_falls_back_with_warning():
    handle = exponential_handle(Analyticity.REAL_AXIS)
    value = invert_cdf(handle, 1.0, Method.TALBOT)
    assert value == pytest.approx(1.0 - math.exp(-1.0), abs=1e-3)
    warnings = terminal_logger.get_logs(log_type="WARNING")
    assert warnings and "stehfest" in warnings[-1]["message"]


def test_stehfest_needs_extended_precision():
    handle = TransformHandle(evaluator=lambda p: 1.0 / (1.0 + p), analyticity=Analyticity.REAL_AXIS)
    with pytest.raises(InversionError):
        invert_cdf(handle, 1.0)


def test_divergence_is_reported_with_diagnostics():
    handle = TransformHandle(evaluator=lambda p: 3.0 / (1.0 + p), label="too heavy")
    with pytest.raises(InversionError) as raised:
        invert_cdf(handle, 2.0)
    assert raised.value.diagnostics["label"] == "too heavy"
    assert raised.value.diagnostics["method"] == "talbot"
    assert raised.value.diagnostics["raw"] > 1.05


def test_clamping_only_trims_roundoff():
    handle = exponential_handle()
    raw = invert_cdf_raw(handle, 40.0)
    assert invert_cdf(handle, 40.0) <= 1.0 + 1e-6
    assert abs(invert_cdf(handle, 40.0) - raw) <= 1e-6


def test_sub_probability_mass():
    handle = TransformHandle(evaluator=lambda p: 0.5 / (1.0 + p), total_mass=0.5)
    assert invert_cdf(handle, 5.0) == pytest.approx(0.5 * (1.0 - math.exp(-5.0)), abs=1e-6)


def test_inversion_point_must_be_positive():
    with pytest.raises(ValueError):
        invert_cdf_raw(exponential_handle(), 0.0)


def test_euler_weights_shape():
    weights = euler_weights(12)
    assert weights.shape == (25,)
    assert weights[0] == 0.5
    assert weights[-1] == pytest.approx(2.0 ** -12)


def test_sup_distance():
    grid = [0.5, 1.0, 2.0]
    assert sup_distance(lambda y: y, lambda y: 2 * y, grid) == 2.0
    with pytest.raises(ValueError):
        sup_distance(lambda y: y, lambda y: y, [])
    with pytest.raises(ValueError):
        sup_distance(lambda y: y, lambda y: y, [2.0, 1.0])
