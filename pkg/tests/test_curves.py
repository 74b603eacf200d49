import numpy as np
import pytest

from gapcr import StepCurve


def test_right_continuous_and_left_limit():
    c = StepCurve([1.0, 2.0], [0.3, 0.7], 0.0)
    np.testing.assert_array_equal(c([0.5, 1.0, 1.5, 2.0, 9.0]), [0.0, 0.3, 0.3, 0.7, 0.7])
    np.testing.assert_array_equal(c.left_limit([1.0, 2.0, 2.5]), [0.0, 0.3, 0.7])
    np.testing.assert_allclose(c.increments(), [0.3, 0.4])


def test_from_points_keeps_last_value():
    c = StepCurve.from_points([2.0, 1.0, 2.0], [5.0, 1.0, 6.0])
    np.testing.assert_array_equal(c.jump_times, [1.0, 2.0])
    np.testing.assert_array_equal(c.values, [1.0, 6.0])


def test_validation():
    with pytest.raises(ValueError, match="strictly increasing"):
        StepCurve([1.0, 1.0], [0.1, 0.2])
    with pytest.raises(ValueError, match="same length"):
        StepCurve([1.0], [0.1, 0.2])


def test_arrays_are_read_only():
    c = StepCurve([1.0], [0.5])
    with pytest.raises(ValueError):
        c.values[0] = 2.0


def test_to_rows_starts_at_zero():
    c = StepCurve([1.0], [0.5], 1.0)
    assert c.to_rows() == [(0.0, 1.0), (1.0, 0.5)]
