"""
Shi-Tomasi corner detection on the reference frame.

Corners are split into vascular and non-vascular sets by membership of the
vessel mask dilated by ``mask_dilation`` pixels.
"""

import logging
from typing import List, Tuple

import numpy as np
from scipy import ndimage

from ..core.models import CornerParams, CornerSet, Frame, VesselMask
from ..utils.exceptions import DetectionError, StructuralError
from ..utils.validators import ArrayValidator

logger = logging.getLogger(__name__)


def min_eig_response(frame: Frame, block_size: int) -> np.ndarray:
    """Smaller eigenvalue of the block-summed gradient structure tensor at every pixel.

    Gradients are central differences; a border band of ``block_size // 2``
    pixels is set to zero.

    Raises:
        ValidationError: If ``block_size`` is not odd or below 3
        StructuralError: If the frame is smaller than the block
    """
    ArrayValidator.assert_odd(block_size, "block_size", minimum=3)
    image = frame.pixels
    if image.shape[0] < block_size or image.shape[1] < block_size:
        raise StructuralError(
            f"Frame {image.shape} is smaller than block_size {block_size}",
            {"frame_shape": image.shape, "block_size": block_size},
        )

    gy, gx = np.gradient(image)
    area = float(block_size * block_size)
    sxx = ndimage.uniform_filter(gx * gx, block_size, mode="constant") * area
    syy = ndimage.uniform_filter(gy * gy, block_size, mode="constant") * area
    sxy = ndimage.uniform_filter(gx * gy, block_size, mode="constant") * area

    half_trace = 0.5 * (sxx + syy)
    radius = np.sqrt((0.5 * (sxx - syy)) ** 2 + sxy ** 2)
    response = np.maximum(half_trace - radius, 0.0)

    half = block_size // 2
    response[:half, :] = 0.0
    response[-half:, :] = 0.0
    response[:, :half] = 0.0
    response[:, -half:] = 0.0
    return response


def dilated_mask(mask: VesselMask, radius: float) -> np.ndarray:
    """Euclidean dilation of a mask by ``radius`` pixels."""
    if radius <= 0:
        return mask.bits.copy()
    if not mask.bits.any():
        return np.zeros(mask.shape, dtype=bool)
    return ndimage.distance_transform_edt(~mask.bits) <= radius


def detect_corners(frame: Frame, mask: VesselMask, params: CornerParams) -> CornerSet:
    """Detect Shi-Tomasi corners and partition them by the dilated vessel mask.

    Candidates are 3x3 local maxima of the response above
    ``quality_level * max(response)``, kept at least ``margin`` pixels from
    the border. They are visited in descending response order (ties broken
    row-major) and accepted greedily when at least ``min_distance`` away from
    every corner already accepted into the same set, until the set holds
    ``max_corners``.

    Raises:
        StructuralError: If the mask does not match the frame
        DetectionError: If either set ends up empty
    """
    ArrayValidator.assert_same_shape(frame.pixels, mask.bits, "frame and mask")
    response = min_eig_response(frame, params.block_size)
    peak = float(response.max())
    if peak <= 0.0:
        raise DetectionError("No corner response above zero; the frame has no texture")

    threshold = params.quality_level * peak
    local_max = response == ndimage.maximum_filter(response, size=3, mode="constant")
    candidates = (response > threshold) & local_max
    m = params.margin
    if m > 0:
        candidates[:m, :] = False
        candidates[-m:, :] = False
        candidates[:, :m] = False
        candidates[:, -m:] = False

    flat = np.flatnonzero(candidates.ravel())
    order = np.argsort(-response.ravel()[flat], kind="stable")
    rows, cols = np.unravel_index(flat[order], response.shape)

    vessel_zone = dilated_mask(mask, params.mask_dilation)
    vascular: List[np.ndarray] = []
    non_vascular: List[np.ndarray] = []
    min_dist_sq = params.min_distance ** 2
    for row, col in zip(rows, cols):
        target = vascular if vessel_zone[row, col] else non_vascular
        if len(target) >= params.max_corners:
            if len(vascular) >= params.max_corners and len(non_vascular) >= params.max_corners:
                break
            continue
        point = np.array([float(col), float(row)])
        if target and np.min(np.sum((np.asarray(target) - point) ** 2, axis=1)) < min_dist_sq:
            continue
        target.append(point)

    if not vascular or not non_vascular:
        raise DetectionError(
            f"Corner detection found {len(vascular)} vascular and {len(non_vascular)} "
            f"non-vascular corners; both sets must be non-empty",
            {"n_vascular": len(vascular), "n_non_vascular": len(non_vascular)},
        )

    corners = CornerSet(np.asarray(vascular), np.asarray(non_vascular))
    logger.info(f"Detected {corners.n_vascular} vascular and {corners.n_non_vascular} non-vascular corners")
    return corners


def grid_membership(mask: VesselMask, roi: tuple, stride: int, mask_dilation: float) -> Tuple[np.ndarray, np.ndarray]:
    """Grid points of ``roi`` and whether each lies in the dilated vessel mask.

    Args:
        roi: (x0, y0, x1, y1) with exclusive upper bounds
    """
    points = grid_points(roi, stride)
    zone = dilated_mask(mask, mask_dilation)
    inside = zone[points[:, 1].astype(np.intp), points[:, 0].astype(np.intp)]
    return points, inside


def grid_corner_set(mask: VesselMask, roi: tuple, stride: int, mask_dilation: float) -> Tuple[CornerSet, np.ndarray]:
    """Partition a regular grid over ``roi`` by the dilated vessel mask, keeping grid order.

    Used as the dense-flow counterpart of :func:`detect_corners`. The second
    return value flags the vascular grid points in grid order.

    Raises:
        DetectionError: If either side of the partition is empty
    """
    points, inside = grid_membership(mask, roi, stride, mask_dilation)
    if not inside.any() or inside.all():
        raise DetectionError(
            f"Dense grid with stride {stride} has {int(inside.sum())} vascular and "
            f"{int((~inside).sum())} non-vascular points"
        )
    return CornerSet(points[inside], points[~inside]), inside


def grid_points(roi: tuple, stride: int) -> np.ndarray:
    """Row-major (x, y) grid points of ``roi`` = (x0, y0, x1, y1) at ``stride`` spacing."""
    if stride < 1:
        raise StructuralError(f"stride must be >= 1, got {stride}")
    x0, y0, x1, y1 = roi
    ys, xs = np.mgrid[y0:y1:stride, x0:x1:stride]
    return np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
