"""
Motion package for vascular_mrc.

Corner detection, pyramidal Lucas-Kanade tracking and mask warping.
"""

from .features import detect_corners, grid_corner_set, grid_points
from .tracking import build_pyramid, track_dense_grid, track_sparse
from .warp import SparseField, interpolate_at, warp_mask

__all__ = [
    "detect_corners",
    "grid_corner_set",
    "grid_points",
    "build_pyramid",
    "track_dense_grid",
    "track_sparse",
    "SparseField",
    "interpolate_at",
    "warp_mask",
]
