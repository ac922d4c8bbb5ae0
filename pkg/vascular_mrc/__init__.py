"""
Vascular MRC Package

Respiratory motion compensation for vascular roadmaps in X-ray fluoroscopy.
A motion-related model learns, from contrasted frames, how vessel motion
follows the motion of surrounding tissue, then predicts vessel motion on
live frames from tracked tissue alone and warps the vessel mask with it.

Main Components:
- Corner detection and pyramidal Lucas-Kanade tracking
- Linear pair regression with Gaussian outlier filtering, and a GP ensemble
- Mask warping, accuracy metrics and timing
- Synthetic breathing phantom with ground truth
"""

__version__ = "1.0.0"
__author__ = "Vascular MRC Team"
__description__ = "Motion-related models for vascular roadmap motion compensation"

# Core imports for easy access
from .core.config import ConfigManager, RunConfig
from .compensators import GprCompensator, MotionCompensator, create_compensator
from .imaging.phantom import generate_phantom, load_phantom, save_phantom
from .regression.mrc import MrcModel
from .regression.gpr import GprEnsemble
from .utils.serialization import load_model, save_model
from .utils.exceptions import CompensationError, ConfigurationError, ValidationError

# Version info
VERSION_INFO = {
    "major": 1,
    "minor": 0,
    "patch": 0,
    "release": "stable",
}

__all__ = [
    # Core classes
    "ConfigManager",
    "RunConfig",
    "MotionCompensator",
    "GprCompensator",
    "create_compensator",
    "MrcModel",
    "GprEnsemble",

    # Data
    "generate_phantom",
    "load_phantom",
    "save_phantom",
    "load_model",
    "save_model",

    # Exceptions
    "CompensationError",
    "ConfigurationError",
    "ValidationError",

    # Version
    "__version__",
    "VERSION_INFO",
]
