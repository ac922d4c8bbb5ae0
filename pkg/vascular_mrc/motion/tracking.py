"""
Pyramidal Lucas-Kanade sparse optical flow.

All corners are tracked at once: each pyramid level gathers the tracking
windows of every corner as an (N, window**2) array and solves the 2x2
normal equations for all of them in one step. The returned displacement
``d`` of a corner at ``p`` satisfies ``cur(p + d) ~= ref(p)``.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Tuple

import numpy as np
from scipy import ndimage

from ..core.models import FlowSet, Frame, LkParams
from ..utils.exceptions import StructuralError
from ..utils.validators import ArrayValidator
from .features import grid_points

logger = logging.getLogger(__name__)

# Corners per worker task when threads > 1.
_CHUNK_SIZE = 64


def build_pyramid(image: np.ndarray, levels: int, min_size: int = 1) -> List[np.ndarray]:
    """Build a 2x box-filter pyramid with at most ``levels`` levels.

    Each coarser level averages non-overlapping 2x2 blocks of the finer
    one (an odd trailing row or column is dropped). Building stops early
    once a level would be smaller than ``min_size`` in either dimension.
    """
    pyramid = [np.asarray(image, dtype=np.float64)]
    for _ in range(1, levels):
        prev = pyramid[-1]
        h, w = prev.shape[0] // 2, prev.shape[1] // 2
        if h < min_size or w < min_size:
            break
        cropped = prev[: 2 * h, : 2 * w]
        pyramid.append(0.25 * (cropped[0::2, 0::2] + cropped[1::2, 0::2] + cropped[0::2, 1::2] + cropped[1::2, 1::2]))
    return pyramid


def _window_offsets(half: int) -> Tuple[np.ndarray, np.ndarray]:
    oy, ox = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    return ox.ravel(), oy.ravel()


def _fits(xs: np.ndarray, ys: np.ndarray, half: int, shape: Tuple[int, int]) -> np.ndarray:
    """True where a window of half-width ``half`` centered at (xs, ys) lies inside the image."""
    height, width = shape
    return (xs - half >= 0) & (xs + half <= width - 1) & (ys - half >= 0) & (ys + half <= height - 1)


def _sample(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear samples of ``image`` at arrays of (x, y) positions."""
    values = ndimage.map_coordinates(image, [ys.ravel(), xs.ravel()], order=1, mode="nearest")
    return values.reshape(xs.shape)


def _min_eigenvalue(gxx: np.ndarray, gxy: np.ndarray, gyy: np.ndarray) -> np.ndarray:
    return 0.5 * (gxx + gyy) - np.sqrt((0.5 * (gxx - gyy)) ** 2 + gxy ** 2)


def _track_chunk(
    ref_pyramid: List[np.ndarray],
    cur_pyramid: List[np.ndarray],
    grad_pyramid: List[Tuple[np.ndarray, np.ndarray]],
    points: np.ndarray,
    params: LkParams,
) -> Tuple[np.ndarray, np.ndarray]:
    """Track one block of corners through the pyramid; returns (displacements, valid)."""
    n = len(points)
    half = params.half_window
    area = float(params.window * params.window)
    ox, oy = _window_offsets(half)
    guess = np.zeros((n, 2))
    valid = np.ones(n, dtype=bool)

    for level in range(len(ref_pyramid) - 1, -1, -1):
        ref_img, cur_img = ref_pyramid[level], cur_pyramid[level]
        grad_x, grad_y = grad_pyramid[level]
        scale = 2.0 ** level
        px = points[:, 0] / scale
        py = points[:, 1] / scale
        finest = level == 0

        usable = _fits(px, py, half, ref_img.shape)
        if finest:
            valid &= usable

        nu = np.zeros((n, 2))
        idx = np.flatnonzero(usable & valid)
        if idx.size:
            wx = px[idx, None] + ox[None, :]
            wy = py[idx, None] + oy[None, :]
            template = _sample(ref_img, wx, wy)
            ix = _sample(grad_x, wx, wy)
            iy = _sample(grad_y, wx, wy)
            gxx = np.sum(ix * ix, axis=1)
            gxy = np.sum(ix * iy, axis=1)
            gyy = np.sum(iy * iy, axis=1)
            det = gxx * gyy - gxy * gxy

            # The quality gate applies at the finest level only.
            solvable = det > 1e-300
            if finest:
                solvable &= _min_eigenvalue(gxx, gxy, gyy) / area >= params.min_eig_threshold
                valid[idx[~solvable]] = False

            active = np.flatnonzero(solvable)
            for _ in range(params.max_iterations):
                if active.size == 0:
                    break
                rows = idx[active]
                cx = px[rows] + guess[rows, 0] + nu[rows, 0]
                cy = py[rows] + guess[rows, 1] + nu[rows, 1]
                inside = _fits(cx, cy, half, cur_img.shape)
                if not np.all(inside):
                    if finest:
                        valid[rows[~inside]] = False
                    active = active[inside]
                    rows = rows[inside]
                    cx, cy = cx[inside], cy[inside]
                    if active.size == 0:
                        break
                warped = _sample(cur_img, cx[:, None] + ox[None, :], cy[:, None] + oy[None, :])
                diff = template[active] - warped
                bx = np.sum(diff * ix[active], axis=1)
                by = np.sum(diff * iy[active], axis=1)
                a, b, c, d = gxx[active], gxy[active], gyy[active], det[active]
                eta_x = (c * bx - b * by) / d
                eta_y = (a * by - b * bx) / d
                nu[rows, 0] += eta_x
                nu[rows, 1] += eta_y
                active = active[np.hypot(eta_x, eta_y) >= params.epsilon]

        if finest:
            guess = guess + nu
        else:
            guess = 2.0 * (guess + nu)

    guess[~valid] = 0.0
    return guess, valid


def track_sparse(ref: Frame, cur: Frame, corners: np.ndarray, params: LkParams, threads: int = 1) -> FlowSet:
    """Track ``corners`` (N, 2 as x, y) from ``ref`` to ``cur`` with pyramidal LK.

    A corner is marked invalid when its window leaves the finest level, or
    when the per-pixel minimum eigenvalue of its structure tensor at the
    finest level falls below ``params.min_eig_threshold``. At coarser levels
    a window that does not fit contributes no update. Invalid corners carry
    a zero displacement.

    Args:
        ref: Reference frame
        cur: Frame to track into
        corners: (x, y) positions in the reference frame
        params: LK parameters
        threads: Worker threads; the result does not depend on this value

    Raises:
        StructuralError: If the frames differ in size
        ValidationError: If a corner lies outside the frame
    """
    ArrayValidator.assert_same_shape(ref.pixels, cur.pixels, "reference and current frame")
    points = ArrayValidator.assert_points(corners, "corners")
    ArrayValidator.assert_in_bounds(points, ref.shape, 0, "corners")
    if len(points) == 0:
        return FlowSet(np.zeros((0, 2)), np.zeros(0, dtype=bool), target_index=cur.index)

    ref_pyramid = build_pyramid(ref.pixels, params.pyramid_levels, min_size=params.window)
    cur_pyramid = build_pyramid(cur.pixels, len(ref_pyramid))
    grad_pyramid = []
    for level in ref_pyramid:
        gy, gx = np.gradient(level)
        grad_pyramid.append((gx, gy))

    if threads <= 1 or len(points) <= _CHUNK_SIZE:
        displacements, valid = _track_chunk(ref_pyramid, cur_pyramid, grad_pyramid, points, params)
    else:
        chunks = [points[start:start + _CHUNK_SIZE] for start in range(0, len(points), _CHUNK_SIZE)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(lambda chunk: _track_chunk(ref_pyramid, cur_pyramid, grad_pyramid, chunk, params), chunks)
            )
        displacements = np.concatenate([r[0] for r in results])
        valid = np.concatenate([r[1] for r in results])

    lost = int((~valid).sum())
    if lost:
        logger.debug(f"Frame {cur.index}: {lost} of {len(points)} tracks lost")
    return FlowSet(displacements, valid, target_index=cur.index)


def track_dense_grid(
    ref: Frame, cur: Frame, roi: Tuple[int, int, int, int], stride: int, params: LkParams, threads: int = 1
) -> FlowSet:
    """Track every grid point of ``roi`` = (x0, y0, x1, y1) at ``stride`` spacing.

    Points are ordered row-major; stride 1 tracks every pixel of the roi.

    Raises:
        StructuralError: If the roi is empty or exceeds the frame, or stride < 1
    """
    x0, y0, x1, y1 = roi
    height, width = ref.shape
    if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
        raise StructuralError(f"ROI {roi} is not a non-empty rectangle inside {width}x{height}")
    return track_sparse(ref, cur, grid_points(roi, stride), params, threads=threads)


def full_frame_roi(shape: Tuple[int, int], margin: int = 0) -> Tuple[int, int, int, int]:
    """ROI covering the frame minus ``margin`` pixels on every side."""
    height, width = shape
    return (margin, margin, width - margin, height - margin)
