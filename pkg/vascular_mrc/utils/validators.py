"""
Array and parameter validation utilities.

Provides the precondition checks shared by the imaging, motion and
regression modules.
"""

from typing import Tuple

import numpy as np

from .exceptions import StructuralError, ValidationError


class ArrayValidator:
    """Validates arrays and scalar parameters before numerical work."""

    @classmethod
    def assert_unit_interval(cls, values: np.ndarray, name: str = "pixels") -> None:
        """Assert that every value is finite and inside [0, 1].

        Args:
            values: Array to check
            name: Name used in the error message

        Raises:
            ValidationError: If a value is non-finite or out of range
        """
        if not np.all(np.isfinite(values)):
            raise ValidationError(
                f"{name} contain non-finite values",
                validation_type="finite_check",
            )
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValidationError(
                f"{name} must lie in [0, 1], got range [{values.min()}, {values.max()}]",
                validation_type="unit_interval_check",
                invalid_value=(float(values.min()), float(values.max())),
            )

    @classmethod
    def assert_same_shape(cls, first: np.ndarray, second: np.ndarray, what: str = "arrays") -> None:
        """Assert that two arrays share their leading 2D shape.

        Raises:
            StructuralError: If the shapes differ
        """
        if first.shape[:2] != second.shape[:2]:
            raise StructuralError(
                f"Dimension mismatch between {what}: {first.shape[:2]} vs {second.shape[:2]}",
                {"first": first.shape[:2], "second": second.shape[:2]},
            )

    @classmethod
    def assert_points(cls, points: np.ndarray, name: str = "points") -> np.ndarray:
        """Coerce a point list to an (N, 2) float array.

        Raises:
            ValidationError: If the array cannot be shaped as (N, 2)
        """
        array = np.asarray(points, dtype=np.float64)
        if array.size == 0:
            return array.reshape(0, 2)
        if array.ndim != 2 or array.shape[1] != 2:
            raise ValidationError(
                f"{name} must have shape (N, 2), got {array.shape}",
                validation_type="shape_check",
                invalid_value=array.shape,
            )
        return array

    @classmethod
    def assert_odd(cls, value: int, name: str, minimum: int) -> None:
        """Assert that an integer parameter is odd and at least ``minimum``."""
        if value < minimum or value % 2 != 1:
            raise ValidationError(
                f"{name} must be odd and >= {minimum}, got {value}",
                validation_type="odd_check",
                invalid_value=value,
            )

    @classmethod
    def assert_in_bounds(cls, points: np.ndarray, shape: Tuple[int, int], margin: float, name: str = "points") -> None:
        """Assert that (x, y) points keep ``margin`` pixels from every border.

        Raises:
            ValidationError: If a point is closer to the border than ``margin``
        """
        height, width = shape
        if points.size == 0:
            return
        xs, ys = points[:, 0], points[:, 1]
        inside = (xs >= margin) & (xs <= width - 1 - margin) & (ys >= margin) & (ys <= height - 1 - margin)
        if not np.all(inside):
            bad = int(np.flatnonzero(~inside)[0])
            raise ValidationError(
                f"{name}[{bad}] = {tuple(points[bad])} is within {margin} px of the frame border",
                validation_type="bounds_check",
                invalid_value=tuple(points[bad]),
            )
