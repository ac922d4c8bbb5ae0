"""
Synthetic fluoroscopy phantom with analytically known breathing motion.

The motion model is a vertical-gradient sinusoid: the displacement of the
content at reference pixel (x, y) at frame t is

    s(y)  = gamma + (1 - gamma) * y / height
    dx    = A * s(y) * sin(2 pi t / T)
    dy    = 0.4 * A * s(y) * (sin(2 pi t / T + phase) - sin(phase))

Both components vanish at t = 0, so frame 0 is the undisplaced reference.

Frames are synthesized by backward warping: for every output pixel q the
reference position p with p + d(p, t) = q is found by fixed-point
iteration and the reference rendering is sampled there bilinearly, so the
recorded truth flows are exact at reference pixels.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import ndimage
from skimage.draw import line as draw_line

from ..core.models import FlowSet, FluoroSequence, Frame, PhantomConfig, VesselMask
from ..utils.exceptions import ConfigurationError
from ..utils.validators import ArrayValidator
from .io import (
    MANIFEST_NAME,
    PathLike,
    SequenceManifest,
    load_centerlines,
    load_flow_field,
    load_reference_mask,
    load_sequence,
    read_manifest,
    read_mask,
    save_flow_field,
    save_frame,
    save_mask,
    write_manifest,
)

logger = logging.getLogger(__name__)

# Fixed-point iterations for inverting p + d(p, t) = q; |dd/dy| <= 0.8 A / height < 1/5.
_INVERSE_ITERATIONS = 8
_STEP_PX = 2.0
_MAX_SEGMENTS = 12


@dataclass(frozen=True)
class PhantomDataset:
    """Rendered sequence plus exact ground truth."""

    sequence: FluoroSequence
    truth_flows: np.ndarray
    reference_mask: VesselMask
    reference_centerline: VesselMask
    gt_centerlines: Dict[int, VesselMask]
    background: Optional[np.ndarray] = None
    config: Optional[PhantomConfig] = field(default=None)


def breathing_displacement(xs: np.ndarray, ys: np.ndarray, t: float, cfg: PhantomConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate the breathing displacement at reference positions (xs, ys) and frame t."""
    ys = np.asarray(ys, dtype=np.float64)
    scale = cfg.gamma + (1.0 - cfg.gamma) * ys / cfg.height
    omega_t = 2.0 * np.pi * t / cfg.period_frames
    zero = np.zeros_like(np.asarray(xs, dtype=np.float64))
    dx = zero + cfg.amplitude_px * scale * np.sin(omega_t)
    dy = zero + 0.4 * cfg.amplitude_px * scale * (np.sin(omega_t + cfg.phase) - np.sin(cfg.phase))
    return dx, dy


def generate_phantom(cfg: PhantomConfig) -> PhantomDataset:
    """Render a phantom sequence with ``contrasted_frames`` + ``live_frames`` frames.

    Frame 0 is the reference. Contrasted frames show dark vessels over the
    textured background; live frames show the background only.

    Raises:
        ConfigurationError: If the amplitude would push content out of the frame
    """
    limit = min(cfg.width, cfg.height) / 4.0
    if cfg.amplitude_px >= limit:
        raise ConfigurationError(
            f"amplitude_px={cfg.amplitude_px} must be below min(width, height)/4 = {limit}",
            config_field="amplitude_px",
        )

    root = np.random.SeedSequence(cfg.seed)
    vessel_ss, texture_ss, noise_ss = root.spawn(3)
    vessel_rng = np.random.default_rng(cfg.vessel_seed if cfg.vessel_seed is not None else vessel_ss)
    texture_rng = np.random.default_rng(cfg.texture_seed if cfg.texture_seed is not None else texture_ss)
    noise_rng = np.random.default_rng(noise_ss)

    centerline, mask = _vessel_tree(cfg, vessel_rng)
    background = _texture(cfg, texture_rng)
    darkening = cfg.vessel_contrast * ndimage.gaussian_filter(mask.astype(np.float64), 0.8)
    contrasted_reference = np.clip(background - darkening, 0.0, 1.0)

    n_frames = cfg.contrasted_frames + cfg.live_frames
    qy, qx = np.mgrid[0:cfg.height, 0:cfg.width].astype(np.float64)
    truth_flows = np.zeros((n_frames, cfg.height, cfg.width, 2))
    frames: List[Frame] = []
    gt_centerlines: Dict[int, VesselMask] = {}
    centerline_points = VesselMask(centerline, kind="centerline").points()

    for t in range(n_frames):
        contrasted = t < cfg.contrasted_frames
        dx, dy = breathing_displacement(qx, qy, t, cfg)
        truth_flows[t, :, :, 0] = dx
        truth_flows[t, :, :, 1] = dy

        source = contrasted_reference if contrasted else background
        pixels = _backward_warp(source, qx, qy, t, cfg)
        if cfg.noise_sigma > 0:
            pixels = np.clip(pixels + noise_rng.normal(0.0, cfg.noise_sigma, pixels.shape), 0.0, 1.0)
        frames.append(Frame(pixels, index=t, contrasted=contrasted))

        if not contrasted:
            gt_centerlines[t] = VesselMask(
                displace_points(centerline_points, truth_flows[t], (cfg.height, cfg.width)),
                kind="centerline",
            )

    sequence = FluoroSequence(frames=tuple(frames), reference_index=0, pixel_spacing=cfg.pixel_spacing_mm)
    logger.info(
        f"Generated phantom {cfg.width}x{cfg.height}: {cfg.contrasted_frames} contrasted + "
        f"{cfg.live_frames} live frames, amplitude {cfg.amplitude_px} px, "
        f"{int(centerline.sum())} centerline pixels"
    )
    return PhantomDataset(
        sequence=sequence,
        truth_flows=truth_flows,
        reference_mask=VesselMask(mask, kind="mask"),
        reference_centerline=VesselMask(centerline, kind="centerline"),
        gt_centerlines=gt_centerlines,
        background=background,
        config=cfg,
    )


def displace_points(points: np.ndarray, flow: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Move integer (x, y) points by a dense flow, round to the nearest pixel and rasterize.

    Targets falling outside the frame are dropped.
    """
    height, width = shape
    bits = np.zeros(shape, dtype=bool)
    if len(points) == 0:
        return bits
    cols = points[:, 0].astype(np.intp)
    rows = points[:, 1].astype(np.intp)
    tx = np.floor(cols + flow[rows, cols, 0] + 0.5).astype(np.intp)
    ty = np.floor(rows + flow[rows, cols, 1] + 0.5).astype(np.intp)
    keep = (tx >= 0) & (tx < width) & (ty >= 0) & (ty < height)
    bits[ty[keep], tx[keep]] = True
    return bits


def truth_flowset(dataset: PhantomDataset, positions: np.ndarray, frame_index: int) -> FlowSet:
    """Sample ground-truth displacements at (x, y) positions of the reference frame."""
    positions = ArrayValidator.assert_points(positions)
    flow = dataset.truth_flows[frame_index]
    coords = [positions[:, 1], positions[:, 0]]
    dx = ndimage.map_coordinates(flow[:, :, 0], coords, order=1, mode="nearest")
    dy = ndimage.map_coordinates(flow[:, :, 1], coords, order=1, mode="nearest")
    return FlowSet(np.column_stack([dx, dy]), np.ones(len(positions), dtype=bool), target_index=frame_index)


def save_phantom(dataset: PhantomDataset, out_dir: PathLike) -> SequenceManifest:
    """Write frames, masks, centerlines, truth flows and manifest to ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for frame in dataset.sequence.frames:
        save_frame(frame, out_dir / f"frame_{frame.index:04d}.pgm", bit_depth=16)
    save_mask(dataset.reference_mask, out_dir / "reference_mask.png")
    save_mask(dataset.reference_centerline, out_dir / "reference_centerline.png")
    for index, centerline in sorted(dataset.gt_centerlines.items()):
        save_mask(centerline, out_dir / f"centerline_{index:04d}.png")
    save_flow_field(out_dir / "truth_flows.f64", dataset.truth_flows)

    height, width = dataset.sequence.shape
    manifest = SequenceManifest(
        contrasted_count=dataset.sequence.contrasted_count,
        reference_index=dataset.sequence.reference_index,
        pixel_spacing_mm=dataset.sequence.pixel_spacing,
        frame_glob="frame_*.pgm",
        mask_file="reference_mask.png",
        centerline_glob="centerline_*.png",
        truth_flow_file="truth_flows.f64",
        width=width,
        height=height,
        frame_count=len(dataset.sequence.frames),
    )
    write_manifest(out_dir / MANIFEST_NAME, manifest)
    logger.info(f"Wrote phantom dataset to {out_dir}")
    return manifest


def load_phantom(dir_path: PathLike) -> PhantomDataset:
    """Read a dataset written by :func:`save_phantom`."""
    dir_path = Path(dir_path)
    manifest = read_manifest(dir_path / MANIFEST_NAME)
    sequence = load_sequence(dir_path, manifest)
    height, width = sequence.shape
    truth_flows = load_flow_field(
        dir_path / (manifest.truth_flow_file or "truth_flows.f64"),
        len(sequence.frames),
        height,
        width,
    )
    return PhantomDataset(
        sequence=sequence,
        truth_flows=truth_flows,
        reference_mask=load_reference_mask(dir_path, manifest),
        reference_centerline=read_mask(dir_path / "reference_centerline.png", kind="centerline"),
        gt_centerlines=load_centerlines(dir_path, manifest),
    )


def _backward_warp(source: np.ndarray, qx: np.ndarray, qy: np.ndarray, t: int, cfg: PhantomConfig) -> np.ndarray:
    px, py = qx.copy(), qy.copy()
    for _ in range(_INVERSE_ITERATIONS):
        dx, dy = breathing_displacement(px, py, t, cfg)
        px = qx - dx
        py = qy - dy
    return ndimage.map_coordinates(source, [py, px], order=1, mode="nearest")


def _texture(cfg: PhantomConfig, rng: np.random.Generator) -> np.ndarray:
    noise = ndimage.gaussian_filter(rng.standard_normal((cfg.height, cfg.width)), cfg.texture_sigma)
    noise = (noise - noise.mean()) / (noise.std() + 1e-12)
    return np.clip(0.5 + 0.12 * noise, 0.05, 0.95)


def _vessel_tree(cfg: PhantomConfig, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Grow a random branching tree from the top edge; returns (centerline, mask)."""
    height, width = cfg.height, cfg.width
    margin = max(8.0, 0.08 * min(width, height))
    centerline = np.zeros((height, width), dtype=bool)
    mask = np.zeros((height, width), dtype=bool)

    start = np.array([rng.uniform(0.35, 0.65) * width, margin])
    stack = [(start, np.pi / 2 + rng.normal(0.0, 0.15), 0.75 * (height - 2 * margin), 3.0, 0)]
    n_segments = 0
    while stack and n_segments < _MAX_SEGMENTS:
        position, angle, length, radius, depth = stack.pop()
        points = [position]
        for step in range(int(length / _STEP_PX)):
            angle += rng.normal(0.0, 0.1)
            position = position + _STEP_PX * np.array([np.cos(angle), np.sin(angle)])
            if not (margin <= position[0] <= width - 1 - margin and margin <= position[1] <= height - 1 - margin):
                break
            points.append(position)
            if depth < 2 and step > 4 and rng.random() < 0.06:
                side = 1.0 if rng.random() < 0.5 else -1.0
                stack.append((position, angle + side * rng.uniform(0.45, 0.9), 0.6 * length, max(1.5, radius - 1.0), depth + 1))
        n_segments += 1
        if len(points) < 2:
            continue

        segment = np.zeros_like(centerline)
        for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
            rr, cc = draw_line(int(round(y0)), int(round(x0)), int(round(y1)), int(round(x1)))
            segment[rr, cc] = True
        centerline |= segment
        mask |= ndimage.distance_transform_edt(~segment) <= radius

    return centerline, mask
