"""
Image, mask and sequence I/O.

Reads 8/16-bit PGM (P5) and grayscale PNG frames through Pillow, normalizing
intensities by the format's maximum value, and writes frames, masks, RGB
overlays and raw float64 flow fields.
"""

import logging
import re
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
from dotenv import dotenv_values
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from ..core.models import Frame, FluoroSequence, MaskKind, VesselMask
from ..utils.exceptions import ConfigurationError, ImageIOError, StructuralError
from ..utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MANIFEST_NAME = "manifest.txt"

_SIXTEEN_BIT_MODES = {"I", "I;16", "I;16B", "I;16L"}
_INDEX_PATTERN = re.compile(r"(\d+)(?!.*\d)")


class SequenceManifest(BaseModel):
    """Key=value manifest describing a frame directory."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    contrasted_count: int = Field(..., ge=1)
    reference_index: int = Field(0, ge=0)
    pixel_spacing_mm: float = Field(1.0, gt=0.0)
    frame_glob: str = "frame_*.pgm"
    mask_file: Optional[str] = None
    centerline_glob: Optional[str] = None
    truth_flow_file: Optional[str] = None
    width: Optional[int] = None
    height: Optional[int] = None
    frame_count: Optional[int] = None


def read_manifest(path: PathLike) -> SequenceManifest:
    """Parse a key=value manifest file.

    Raises:
        ImageIOError: If the file does not exist
        ConfigurationError: If a key is unknown or a value is invalid
    """
    path = Path(path)
    if not path.is_file():
        raise ImageIOError(f"Manifest not found: {path}", path=str(path))
    values = {key: value for key, value in dotenv_values(path).items() if value not in (None, "")}
    try:
        return SequenceManifest(**values)
    except PydanticValidationError as e:
        fields = ", ".join(".".join(str(p) for p in err["loc"]) for err in e.errors())
        raise ConfigurationError(f"Invalid manifest {path}: {fields}", config_field=fields)


def write_manifest(path: PathLike, manifest: SequenceManifest) -> None:
    """Write a manifest as UTF-8 key=value lines, skipping unset keys."""
    lines = [f"{key}={value}" for key, value in manifest.model_dump().items() if value is not None]
    _write_text(Path(path), "\n".join(lines) + "\n")


def read_image(path: PathLike) -> np.ndarray:
    """Read a grayscale image and normalize it to [0, 1] by the format maximum.

    Raises:
        ImageIOError: If the file is missing or not a readable image
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in _SIXTEEN_BIT_MODES:
                raw = np.asarray(img, dtype=np.float64)
                format_max = 65535.0
            else:
                if img.mode != "L":
                    img = img.convert("L")
                raw = np.asarray(img, dtype=np.float64)
                format_max = 255.0
    except FileNotFoundError:
        raise ImageIOError(f"Image file not found: {path}", path=str(path))
    except (UnidentifiedImageError, OSError) as e:
        raise ImageIOError(f"Cannot read image {path}: {e}", path=str(path))
    return np.clip(raw / format_max, 0.0, 1.0)


def save_frame(frame: Frame, path: PathLike, bit_depth: int = 16) -> None:
    """Write a frame as PGM or PNG (chosen by suffix) with 8 or 16 bits per pixel."""
    if bit_depth == 16:
        data = np.floor(frame.pixels * 65535.0 + 0.5).astype(np.uint16)
    elif bit_depth == 8:
        data = np.floor(frame.pixels * 255.0 + 0.5).astype(np.uint8)
    else:
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    _save_image(Image.fromarray(data), Path(path))


def read_mask(path: PathLike, kind: MaskKind = "mask") -> VesselMask:
    """Read a binary mask image; any nonzero pixel is set."""
    return VesselMask(read_image(path) > 0.0, kind=kind)


def save_mask(mask: VesselMask, path: PathLike) -> None:
    """Write a mask as an 8-bit image (0 / 255)."""
    _save_image(Image.fromarray(mask.bits.astype(np.uint8) * 255), Path(path))


def load_sequence(dir_path: PathLike, manifest: Optional[SequenceManifest] = None) -> FluoroSequence:
    """Load the frames of a sequence directory in manifest order.

    Args:
        dir_path: Directory holding the frames
        manifest: Parsed manifest; read from ``manifest.txt`` when omitted

    Returns:
        FluoroSequence with the first ``contrasted_count`` frames flagged contrasted

    Raises:
        ImageIOError: If a file is missing or unreadable
        StructuralError: If the frame count or dimensions disagree with the manifest
    """
    dir_path = Path(dir_path)
    manifest = manifest or read_manifest(dir_path / MANIFEST_NAME)
    files = sorted(dir_path.glob(manifest.frame_glob))
    if len(files) < manifest.contrasted_count:
        raise StructuralError(
            f"Manifest declares {manifest.contrasted_count} contrasted frames but only "
            f"{len(files)} images match '{manifest.frame_glob}' in {dir_path}",
            {"contrasted_count": manifest.contrasted_count, "found": len(files)},
        )
    if manifest.frame_count is not None and len(files) != manifest.frame_count:
        raise StructuralError(
            f"Manifest declares {manifest.frame_count} frames, found {len(files)} in {dir_path}"
        )

    frames = [
        Frame(read_image(path), index=i, contrasted=i < manifest.contrasted_count)
        for i, path in enumerate(files)
    ]
    sequence = FluoroSequence(
        frames=tuple(frames),
        reference_index=manifest.reference_index,
        pixel_spacing=manifest.pixel_spacing_mm,
    )
    logger.info(
        f"Loaded {len(frames)} frames from {dir_path} "
        f"({sequence.contrasted_count} contrasted, reference {sequence.reference_index})"
    )
    return sequence


def load_reference_mask(dir_path: PathLike, manifest: SequenceManifest) -> VesselMask:
    """Load the reference vessel mask named by the manifest."""
    if not manifest.mask_file:
        raise ImageIOError(f"Manifest in {dir_path} names no mask_file")
    return read_mask(Path(dir_path) / manifest.mask_file, kind="mask")


def load_centerlines(dir_path: PathLike, manifest: SequenceManifest) -> Dict[int, VesselMask]:
    """Load labeled centerlines keyed by the frame ordinal in their file name."""
    if not manifest.centerline_glob:
        return {}
    centerlines: Dict[int, VesselMask] = {}
    for path in sorted(Path(dir_path).glob(manifest.centerline_glob)):
        centerlines[frame_ordinal(path)] = read_mask(path, kind="centerline")
    return centerlines


def frame_ordinal(path: PathLike) -> int:
    """Extract the trailing frame number from a file name such as ``centerline_0012.png``."""
    match = _INDEX_PATTERN.search(Path(path).stem)
    if not match:
        raise ImageIOError(f"No frame number in file name {path}", path=str(path))
    return int(match.group(1))


def write_overlay(frame: Frame, mask: VesselMask, out_path: PathLike) -> None:
    """Write an 8-bit RGB PNG with mask pixels tinted red over the grayscale frame.

    Raises:
        StructuralError: If frame and mask dimensions differ
        ImageIOError: If the file cannot be written
    """
    ArrayValidator.assert_same_shape(frame.pixels, mask.bits, "frame and mask")
    gray = np.floor(frame.pixels * 255.0 + 0.5).astype(np.uint8)
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    rgb[mask.bits, 0] = 255
    rgb[mask.bits, 1] = gray[mask.bits] // 2
    rgb[mask.bits, 2] = gray[mask.bits] // 2
    _save_image(Image.fromarray(rgb), Path(out_path), fmt="PNG")


def save_flow_field(path: PathLike, flows: np.ndarray) -> None:
    """Write a flow array as raw little-endian float64."""
    path = Path(path)
    try:
        np.ascontiguousarray(flows, dtype="<f8").tofile(path)
    except OSError as e:
        raise ImageIOError(f"Cannot write flow field {path}: {e}", path=str(path))


def load_flow_field(path: PathLike, frame_count: int, height: int, width: int) -> np.ndarray:
    """Read a raw little-endian float64 flow array of shape (frames, height, width, 2)."""
    path = Path(path)
    try:
        data = np.fromfile(path, dtype="<f8")
    except OSError as e:
        raise ImageIOError(f"Cannot read flow field {path}: {e}", path=str(path))
    expected = frame_count * height * width * 2
    if data.size != expected:
        raise StructuralError(
            f"Flow field {path} holds {data.size} values, expected {expected}",
            {"path": str(path)},
        )
    return data.reshape(frame_count, height, width, 2).astype(np.float64)


def _save_image(img: Image.Image, path: Path, fmt: Optional[str] = None) -> None:
    try:
        img.save(path, format=fmt)
    except (OSError, ValueError, KeyError) as e:
        raise ImageIOError(f"Cannot write image {path}: {e}", path=str(path))
    logger.debug(f"Wrote {path}")


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ImageIOError(f"Cannot write {path}: {e}", path=str(path))
