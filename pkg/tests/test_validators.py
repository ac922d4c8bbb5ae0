"""
Tests for array validators.
"""

import numpy as np
import pytest

from vascular_mrc.utils.exceptions import StructuralError, ValidationError
from vascular_mrc.utils.validators import ArrayValidator


class TestArrayValidator:
    """Test cases for ArrayValidator."""

    def test_unit_interval(self):
        """Test acceptance of [0, 1] values and rejection of others."""
        ArrayValidator.assert_unit_interval(np.array([[0.0, 1.0], [0.5, 0.25]]))
        with pytest.raises(ValidationError) as exc_info:
            ArrayValidator.assert_unit_interval(np.array([0.0, 1.5]))
        assert exc_info.value.validation_type == "unit_interval_check"
        with pytest.raises(ValidationError):
            ArrayValidator.assert_unit_interval(np.array([np.nan]))

    def test_same_shape(self):
        """Test the 2D shape comparison."""
        ArrayValidator.assert_same_shape(np.zeros((4, 5)), np.zeros((4, 5, 3)))
        with pytest.raises(StructuralError) as exc_info:
            ArrayValidator.assert_same_shape(np.zeros((4, 5)), np.zeros((5, 4)), "frame and mask")
        assert "frame and mask" in str(exc_info.value)

    def test_points(self):
        """Test coercion of point lists."""
        assert ArrayValidator.assert_points([]).shape == (0, 2)
        assert ArrayValidator.assert_points([[1, 2]]).dtype == np.float64
        with pytest.raises(ValidationError):
            ArrayValidator.assert_points(np.zeros((3, 3)))

    def test_odd(self):
        """Test odd-parameter validation."""
        ArrayValidator.assert_odd(5, "window", minimum=5)
        for bad in (4, 3):
            with pytest.raises(ValidationError):
                ArrayValidator.assert_odd(bad, "window", minimum=5)

    def test_in_bounds(self):
        """Test the border margin check."""
        points = np.array([[10.0, 10.0], [89.0, 50.0]])
        ArrayValidator.assert_in_bounds(points, (100, 100), margin=10)
        with pytest.raises(ValidationError) as exc_info:
            ArrayValidator.assert_in_bounds(points, (100, 100), margin=11)
        assert exc_info.value.invalid_value == (10.0, 10.0)
