"""
Utilities package for vascular_mrc.

Contains validation and exception handling. Model serialization lives in
``vascular_mrc.utils.serialization`` and is imported from there.
"""

from .validators import ArrayValidator
from .exceptions import CompensationError, ConfigurationError, DataError, NumericalError, ValidationError

__all__ = [
    "ArrayValidator",
    "CompensationError",
    "ConfigurationError",
    "DataError",
    "NumericalError",
    "ValidationError",
]
