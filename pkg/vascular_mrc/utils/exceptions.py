"""
Custom exceptions for the vascular_mrc package.

Every exception carries an ``exit_code`` so the CLI can map failures onto
process exit statuses (2 config, 3 data, 4 numerical).
"""

from typing import Any, Dict, Optional


class CompensationError(Exception):
    """Base exception for the vascular_mrc package."""

    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        """Initialize compensation error.

        Args:
            message: Error message
            details: Optional dictionary with additional error details
        """
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def __str__(self) -> str:
        """String representation of the error."""
        if self.details:
            return f"{self.message} | Details: {self.details}"
        return self.message


class ConfigurationError(CompensationError):
    """Exception raised for configuration-related errors."""

    exit_code = 2

    def __init__(self, message: str, config_field: Optional[str] = None):
        """Initialize configuration error.

        Args:
            message: Error message
            config_field: Optional field name that caused the error
        """
        details = {"config_field": config_field} if config_field else {}
        super().__init__(message, details)
        self.config_field = config_field


class ValidationError(CompensationError):
    """Exception raised when an argument fails a precondition check."""

    exit_code = 2

    def __init__(self, message: str, validation_type: Optional[str] = None, invalid_value: Any = None):
        """Initialize validation error.

        Args:
            message: Error message
            validation_type: Type of validation that failed
            invalid_value: The value that failed validation
        """
        details = {}
        if validation_type:
            details["validation_type"] = validation_type
        if invalid_value is not None:
            details["invalid_value"] = invalid_value

        super().__init__(message, details)
        self.validation_type = validation_type
        self.invalid_value = invalid_value


class DataError(CompensationError):
    """Base class for errors caused by the input data."""

    exit_code = 3


class ImageIOError(DataError):
    """Exception raised when an image, mask or manifest cannot be read or written."""

    def __init__(self, message: str, path: Optional[str] = None):
        details = {"path": str(path)} if path else {}
        super().__init__(message, details)
        self.path = path


class ModelFileError(DataError):
    """Exception raised when a model file is missing, truncated or of an unknown format."""

    def __init__(self, message: str, path: Optional[str] = None):
        details = {"path": str(path)} if path else {}
        super().__init__(message, details)
        self.path = path


class StructuralError(DataError):
    """Exception raised for shape or count mismatches between inputs."""


class DetectionError(DataError):
    """Exception raised when corner detection yields an unusable corner set."""


class EvaluationError(DataError):
    """Exception raised when a score cannot be computed (empty centerlines)."""


class NumericalError(CompensationError):
    """Base class for numerical failures during training or prediction."""

    exit_code = 4


class UndefinedCorrelation(NumericalError):
    """Raised when a Pearson coefficient is undefined (too few frames or zero variance)."""


class FitError(NumericalError):
    """Raised when a least-squares fit is degenerate."""


class TrainingError(NumericalError):
    """Raised when a model cannot be trained."""


class PredictionError(NumericalError):
    """Raised when no prediction can be produced for a frame."""

    def __init__(self, message: str, frame_index: Optional[int] = None):
        details = {"frame_index": frame_index} if frame_index is not None else {}
        super().__init__(message, details)
        self.frame_index = frame_index


class FactorizationError(NumericalError):
    """Raised when a GP covariance matrix is not positive definite."""

    def __init__(self, message: str, c: Optional[float] = None, eta: Optional[float] = None):
        details = {}
        if c is not None:
            details["c"] = c
        if eta is not None:
            details["eta"] = eta
        super().__init__(message, details)
        self.c = c
        self.eta = eta


class OptimizationError(NumericalError):
    """Raised when GP hyperparameter optimization fails from every start."""


class WarpError(NumericalError):
    """Raised when a sparse field has no valid anchors."""
