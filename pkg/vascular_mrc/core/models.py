"""
Data models for the vascular_mrc package.

Parameter models are Pydantic models (validated, immutable); image and
motion containers are frozen dataclasses over numpy arrays.
"""

from dataclasses import dataclass, field
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..utils.exceptions import StructuralError
from ..utils.validators import ArrayValidator


MaskKind = Literal["mask", "centerline"]
KernelKind = Literal["paper", "squared"]


# ---------------------------------------------------------------------------
# Parameter models
# ---------------------------------------------------------------------------


class CornerParams(BaseModel):
    """Shi-Tomasi detection parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_corners: int = Field(200, ge=1)
    quality_level: float = Field(0.05, gt=0.0, lt=1.0)
    min_distance: float = Field(8.0, ge=1.0)
    block_size: int = 5
    mask_dilation: float = Field(3.0, ge=0.0)
    margin: int = Field(20, ge=0)

    @field_validator("block_size")
    @classmethod
    def _odd_block(cls, value: int) -> int:
        if value < 3 or value % 2 != 1:
            raise ValueError(f"block_size must be odd and >= 3, got {value}")
        return value


class LkParams(BaseModel):
    """Pyramidal Lucas-Kanade parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    window: int = 21
    pyramid_levels: int = Field(3, ge=1)
    max_iterations: int = Field(30, ge=1)
    epsilon: float = Field(0.01, gt=0.0)
    min_eig_threshold: float = Field(1e-6, ge=0.0)

    @field_validator("window")
    @classmethod
    def _odd_window(cls, value: int) -> int:
        if value < 5 or value % 2 != 1:
            raise ValueError(f"window must be odd and >= 5, got {value}")
        return value

    @property
    def half_window(self) -> int:
        return self.window // 2


class WarpParams(BaseModel):
    """Inverse-distance weighting parameters for mask warping."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    k: int = Field(4, ge=1)
    power: float = Field(2.0, gt=0.0)


class GprParams(BaseModel):
    """Gaussian process ensemble parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma_n: float = Field(0.01, ge=0.0)
    kernel: KernelKind = "paper"
    vbar_th: Optional[float] = Field(None, ge=0.0)


class PhantomConfig(BaseModel):
    """Synthetic fluoroscopy phantom configuration."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    width: int = Field(256, ge=16)
    height: int = Field(256, ge=16)
    amplitude_px: float = Field(8.0, ge=0.0)
    period_frames: float = Field(16.0, gt=0.0)
    gamma: float = Field(0.5, ge=0.0, le=1.0)
    phase: float = 0.5
    contrasted_frames: int = Field(12, ge=1)
    live_frames: int = Field(20, ge=0)
    seed: int = 0
    vessel_seed: Optional[int] = None
    texture_seed: Optional[int] = None
    vessel_contrast: float = Field(0.35, ge=0.0, le=1.0)
    texture_sigma: float = Field(2.5, gt=0.0)
    noise_sigma: float = Field(0.0, ge=0.0)
    pixel_spacing_mm: float = Field(0.5, gt=0.0)


# ---------------------------------------------------------------------------
# Image containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Frame:
    """Grayscale frame with intensities normalized to [0, 1]."""

    pixels: np.ndarray
    index: int = 0
    contrasted: bool = False

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=np.float64)
        if pixels.ndim != 2:
            raise StructuralError(f"Frame pixels must be 2D, got shape {pixels.shape}")
        ArrayValidator.assert_unit_interval(pixels)
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class VesselMask:
    """Binary vessel occupancy, either a filled mask or a one-pixel centerline."""

    bits: np.ndarray
    kind: MaskKind = "mask"

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise StructuralError(f"Mask must be 2D, got shape {bits.shape}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(self.bits.sum())

    def points(self) -> np.ndarray:
        """Set pixels as an (N, 2) array of (x, y) coordinates in row-major order."""
        rows, cols = np.nonzero(self.bits)
        return np.column_stack([cols, rows]).astype(np.float64)


@dataclass(frozen=True)
class FluoroSequence:
    """Contrasted frames followed by live frames, anchored on one reference frame."""

    frames: Tuple[Frame, ...]
    reference_index: int
    pixel_spacing: float = 1.0

    def __post_init__(self):
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        if not frames:
            raise StructuralError("A sequence needs at least one frame")
        shape = frames[0].shape
        for frame in frames[1:]:
            if frame.shape != shape:
                raise StructuralError(
                    f"Frame {frame.index} has shape {frame.shape}, expected {shape}",
                    {"frame_index": frame.index},
                )
        flags = [frame.contrasted for frame in frames]
        n_contrasted = sum(flags)
        if any(flags[n_contrasted:]) or not all(flags[:n_contrasted]):
            raise StructuralError("Contrasted frames must precede live frames")
        if not 0 <= self.reference_index < n_contrasted:
            raise StructuralError(
                f"reference_index {self.reference_index} does not address one of "
                f"{n_contrasted} contrasted frames"
            )

    @property
    def contrasted_count(self) -> int:
        return sum(1 for frame in self.frames if frame.contrasted)

    @property
    def contrasted_frames(self) -> Tuple[Frame, ...]:
        return self.frames[: self.contrasted_count]

    @property
    def live_frames(self) -> Tuple[Frame, ...]:
        return self.frames[self.contrasted_count:]

    @property
    def reference(self) -> Frame:
        return self.frames[self.reference_index]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.frames[0].shape


# ---------------------------------------------------------------------------
# Motion containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CornerSet:
    """Vascular and non-vascular corners as (N, 2) arrays of (x, y) pixel positions."""

    vascular: np.ndarray
    non_vascular: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vascular", ArrayValidator.assert_points(self.vascular, "vascular"))
        object.__setattr__(self, "non_vascular", ArrayValidator.assert_points(self.non_vascular, "non_vascular"))

    @property
    def n_vascular(self) -> int:
        return len(self.vascular)

    @property
    def n_non_vascular(self) -> int:
        return len(self.non_vascular)


@dataclass(frozen=True)
class FlowSet:
    """Per-corner displacements relative to the reference frame.

    Invalid entries always carry a (0, 0) displacement. ``degraded`` marks
    predictions produced by a fallback path.
    """

    displacements: np.ndarray
    valid: np.ndarray
    target_index: int = 0
    degraded: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        displacements = ArrayValidator.assert_points(self.displacements, "displacements").copy()
        valid = np.array(self.valid, dtype=bool).reshape(-1)
        if len(valid) != len(displacements):
            raise StructuralError(
                f"{len(displacements)} displacements but {len(valid)} validity flags"
            )
        displacements[~valid] = 0.0
        degraded = (
            np.zeros(len(valid), dtype=bool)
            if self.degraded is None
            else np.array(self.degraded, dtype=bool).reshape(-1)
        )
        for array in (displacements, valid, degraded):
            array.setflags(write=False)
        object.__setattr__(self, "displacements", displacements)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "degraded", degraded)

    def __len__(self) -> int:
        return len(self.valid)

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())
