"""
Sparse-to-dense motion field interpolation and vessel mask warping.

Predicted vascular corner flows are spread to every mask pixel by inverse
distance weighting over the k nearest valid anchors, then the mask is
forward-mapped and sealed with a 3x3 closing.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from ..core.models import FlowSet, VesselMask, WarpParams
from ..utils.exceptions import StructuralError, WarpError
from ..utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

_WEIGHT_EPS = 1e-6
_CLOSING = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class SparseField:
    """Displacement vectors attached to anchor positions."""

    anchors: np.ndarray
    vectors: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        anchors = ArrayValidator.assert_points(self.anchors, "anchors")
        vectors = ArrayValidator.assert_points(self.vectors, "vectors")
        valid = np.asarray(self.valid, dtype=bool).reshape(-1)
        if not len(anchors) == len(vectors) == len(valid):
            raise StructuralError(
                f"SparseField lengths differ: {len(anchors)} anchors, "
                f"{len(vectors)} vectors, {len(valid)} flags"
            )
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_flows(cls, anchors: np.ndarray, flows: FlowSet) -> "SparseField":
        return cls(anchors, flows.displacements, flows.valid)

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())


def interpolate_at(field: SparseField, points: np.ndarray, k: int = 4, power: float = 2.0) -> np.ndarray:
    """Inverse-distance-weighted displacement at each (x, y) point.

    Uses the ``k`` nearest valid anchors (fewer if fewer exist) with weight
    ``1 / (distance**power + 1e-6)``. A point coinciding with an anchor gets
    that anchor's vector.

    Raises:
        WarpError: If the field has no valid anchor
    """
    points = ArrayValidator.assert_points(points, "points")
    if k < 1:
        raise StructuralError(f"k must be >= 1, got {k}")
    if field.n_valid == 0:
        raise WarpError("Cannot interpolate a sparse field with no valid anchors")
    if len(points) == 0:
        return np.zeros((0, 2))

    anchors = field.anchors[field.valid]
    vectors = field.vectors[field.valid]
    k_eff = min(k, len(anchors))
    distances, neighbors = cKDTree(anchors).query(points, k=k_eff)
    if k_eff == 1:
        distances = distances[:, None]
        neighbors = neighbors[:, None]

    weights = 1.0 / (distances ** power + _WEIGHT_EPS)
    weights /= weights.sum(axis=1, keepdims=True)
    result = np.einsum("nk,nkc->nc", weights, vectors[neighbors])

    coincident = distances[:, 0] == 0.0
    if np.any(coincident):
        result[coincident] = vectors[neighbors[coincident, 0]]
    return result


def warp_mask(mask: VesselMask, field: SparseField, params: WarpParams) -> VesselMask:
    """Forward-map every set mask pixel by the interpolated field and close 3x3.

    Targets are rounded to the nearest pixel; targets outside the frame are
    dropped.

    Raises:
        WarpError: If the field has no valid anchor
    """
    height, width = mask.shape
    points = mask.points()
    out = np.zeros((height + 4, width + 4), dtype=bool)
    if len(points):
        moved = points + interpolate_at(field, points, params.k, params.power)
        tx = np.floor(moved[:, 0] + 0.5).astype(np.intp)
        ty = np.floor(moved[:, 1] + 0.5).astype(np.intp)
        keep = (tx >= 0) & (tx < width) & (ty >= 0) & (ty < height)
        dropped = len(points) - int(keep.sum())
        if dropped:
            logger.debug(f"{dropped} warped mask pixels fell outside the frame")
        out[ty[keep] + 2, tx[keep] + 2] = True
    elif field.n_valid == 0:
        raise WarpError("Cannot warp with a sparse field that has no valid anchors")

    closed = ndimage.binary_closing(out, structure=_CLOSING)
    return VesselMask(closed[2:-2, 2:-2], kind=mask.kind)
