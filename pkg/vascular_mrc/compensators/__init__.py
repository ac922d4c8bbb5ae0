"""
Compensators package for vascular_mrc.

Each compensator runs the learn / predict pipeline with one regressor.
"""

from typing import Optional

from ..core.config import ConfigManager
from .base_compensator import FlowSource, FramePrediction, MotionCompensator, split_flows
from .gpr_compensator import GprCompensator

COMPENSATORS = {
    "mrc": MotionCompensator,
    "gpr": GprCompensator,
}


def create_compensator(
    config_manager: ConfigManager, flow_source: Optional[FlowSource] = None, regressor: Optional[str] = None
) -> MotionCompensator:
    """Create a compensator for ``regressor`` (default: the configured one)."""
    name = regressor or config_manager.config.regressor
    if name not in COMPENSATORS:
        raise ValueError(f"Unknown regressor: {name}. Available: {list(COMPENSATORS.keys())}")
    return COMPENSATORS[name](config_manager, flow_source=flow_source)


__all__ = [
    "COMPENSATORS",
    "FlowSource",
    "FramePrediction",
    "GprCompensator",
    "MotionCompensator",
    "create_compensator",
    "split_flows",
]
