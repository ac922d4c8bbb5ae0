"""
Core package for vascular_mrc.

Contains configuration and the data models shared by every stage.
"""

from .config import ConfigManager, RunConfig
from .models import (
    CornerParams, CornerSet, FlowSet, FluoroSequence, Frame, GprParams,
    LkParams, PhantomConfig, VesselMask, WarpParams,
)

__all__ = [
    "ConfigManager",
    "RunConfig",
    "CornerParams",
    "CornerSet",
    "FlowSet",
    "FluoroSequence",
    "Frame",
    "GprParams",
    "LkParams",
    "PhantomConfig",
    "VesselMask",
    "WarpParams",
]
