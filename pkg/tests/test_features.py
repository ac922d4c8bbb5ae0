"""
Tests for Shi-Tomasi corner detection.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vascular_mrc.core.models import CornerParams, Frame, VesselMask
from vascular_mrc.motion.features import (
    detect_corners,
    dilated_mask,
    grid_corner_set,
    grid_points,
    min_eig_response,
)
from vascular_mrc.utils.exceptions import DetectionError, StructuralError, ValidationError

from .conftest import textured


def _half_mask(shape=(96, 96)) -> VesselMask:
    bits = np.zeros(shape, dtype=bool)
    bits[:, : shape[1] // 2] = True
    return VesselMask(bits)


class TestCornerDetection:
    """Test cases for detect_corners."""

    def test_constant_frame(self):
        """Test that a frame without texture has no corners."""
        frame = Frame(np.full((64, 64), 0.5))
        with pytest.raises(DetectionError):
            detect_corners(frame, _half_mask((64, 64)), CornerParams(margin=5))

    def test_two_isolated_patterns(self):
        """Test one corner per set from one blob inside and one outside the mask."""
        pixels = np.full((64, 64), 0.2)
        pixels[15:18, 15:18] = 0.8
        pixels[47:50, 47:50] = 0.8
        bits = np.zeros((64, 64), dtype=bool)
        bits[8:25, 8:25] = True
        params = CornerParams(min_distance=30.0, margin=5, mask_dilation=0.0)
        corners = detect_corners(Frame(pixels), VesselMask(bits), params)
        assert corners.n_vascular == 1
        assert corners.n_non_vascular == 1
        assert np.all(np.abs(corners.vascular[0] - 16.0) <= 2.0)
        assert np.all(np.abs(corners.non_vascular[0] - 48.0) <= 2.0)

    def test_spacing_larger_than_frame(self, texture_frame):
        """Test that a huge minimum distance keeps one corner per set."""
        corners = detect_corners(texture_frame, _half_mask(), CornerParams(min_distance=500.0, margin=10))
        assert corners.n_vascular == 1
        assert corners.n_non_vascular == 1

    def test_partition_spacing_and_margin(self, small_phantom):
        """Test the set partition, spacing and border rules on the phantom reference."""
        params = CornerParams(min_distance=6.0, margin=20, max_corners=60)
        mask = small_phantom.reference_mask
        corners = detect_corners(small_phantom.sequence.reference, mask, params)
        zone = dilated_mask(mask, params.mask_dilation)
        for points, inside in ((corners.vascular, True), (corners.non_vascular, False)):
            assert 0 < len(points) <= 60
            assert np.all(zone[points[:, 1].astype(int), points[:, 0].astype(int)] == inside)
            assert np.all((points >= 20) & (points <= 127 - 20))
            gaps = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
            np.fill_diagonal(gaps, np.inf)
            assert gaps.min() >= 6.0

    def test_determinism(self, texture_frame):
        """Test that detection is repeatable."""
        params = CornerParams(margin=10)
        first = detect_corners(texture_frame, _half_mask(), params)
        second = detect_corners(texture_frame, _half_mask(), params)
        assert np.array_equal(first.vascular, second.vascular)
        assert np.array_equal(first.non_vascular, second.non_vascular)

    def test_per_set_cap(self, texture_frame):
        """Test that each set is capped at max_corners."""
        corners = detect_corners(texture_frame, _half_mask(), CornerParams(max_corners=3, min_distance=2.0, margin=10))
        assert corners.n_vascular == 3
        assert corners.n_non_vascular == 3

    @settings(max_examples=100, deadline=None)
    @given(
        seed=st.integers(0, 50),
        low=st.floats(0.01, 0.3),
        raise_by=st.floats(0.0, 0.5),
    )
    def test_raising_quality_never_adds(self, seed, low, raise_by):
        """Test that a higher quality level yields a subset of the corners."""
        frame = Frame(textured((64, 64), seed=seed))
        mask = _half_mask((64, 64))
        strict_params = CornerParams(quality_level=min(low + raise_by, 0.99), margin=8)
        try:
            base = detect_corners(frame, mask, CornerParams(quality_level=low, margin=8))
        except DetectionError:
            with pytest.raises(DetectionError):
                detect_corners(frame, mask, strict_params)
            return
        try:
            stricter = detect_corners(frame, mask, strict_params)
        except DetectionError:
            return
        for strict, loose in ((stricter.vascular, base.vascular), (stricter.non_vascular, base.non_vascular)):
            assert len(strict) <= len(loose)
            assert {tuple(p) for p in strict} <= {tuple(p) for p in loose}


class TestResponseAndGrid:
    """Test cases for the response map and grid helpers."""

    def test_even_block_size(self, texture_frame):
        """Test that an even block size is rejected."""
        with pytest.raises(ValidationError):
            min_eig_response(texture_frame, 4)

    def test_frame_smaller_than_block(self):
        """Test that a frame smaller than the block is rejected."""
        with pytest.raises(StructuralError):
            min_eig_response(Frame(np.zeros((3, 3))), 5)

    def test_response_is_non_negative(self, texture_frame):
        """Test the clipped eigenvalue and the zeroed border band."""
        response = min_eig_response(texture_frame, 5)
        assert response.min() >= 0.0
        assert np.all(response[:2, :] == 0.0)
        assert np.all(response[:, -2:] == 0.0)

    def test_grid_points_row_major(self):
        """Test grid point order and spacing."""
        points = grid_points((2, 4, 8, 9), 3)
        assert points.tolist() == [[2, 4], [5, 4], [2, 7], [5, 7]]
        with pytest.raises(StructuralError):
            grid_points((0, 0, 4, 4), 0)

    def test_grid_corner_set(self):
        """Test the dense-grid partition by the dilated mask."""
        bits = np.zeros((32, 32), dtype=bool)
        bits[:, :10] = True
        corners, inside = grid_corner_set(VesselMask(bits), (0, 0, 32, 32), 8, mask_dilation=0.0)
        assert inside.tolist() == [True, True, False, False] * 4
        assert corners.vascular[:, 0].tolist() == [0.0, 8.0] * 4
        assert np.all(corners.non_vascular[:, 0] >= 16)
        with pytest.raises(DetectionError):
            grid_corner_set(VesselMask(np.zeros((32, 32))), (0, 0, 32, 32), 8, mask_dilation=0.0)

    def test_dilation(self):
        """Test Euclidean mask dilation."""
        bits = np.zeros((9, 9), dtype=bool)
        bits[4, 4] = True
        mask = VesselMask(bits)
        assert np.array_equal(dilated_mask(mask, 0.0), bits)
        assert dilated_mask(mask, 1.0).sum() == 5
        assert dilated_mask(mask, 1.5).sum() == 9
