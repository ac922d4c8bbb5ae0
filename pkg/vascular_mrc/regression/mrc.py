"""
Motion-related model: Pearson-gated per-pair linear regression from
non-vascular corner motion to vascular corner motion.

Statistics for every (vascular i, non-vascular j) pair are computed over the
frames in which both corners were tracked, with population (1/k) moments.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ..core.models import CornerSet, FlowSet
from ..utils.exceptions import (
    FitError,
    PredictionError,
    StructuralError,
    TrainingError,
    UndefinedCorrelation,
    ValidationError,
)
from ..utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

MIN_CORRELATION_FRAMES = 3
# Per-axis variances at or below this (px^2) count as constant series.
VARIANCE_EPS = 1e-12


@dataclass(frozen=True)
class PairSeries:
    """Displacement series of one non-vascular (xs) and one vascular (ys) corner over k frames."""

    xs: np.ndarray
    ys: np.ndarray
    valid_frames: np.ndarray

    def __post_init__(self):
        xs = ArrayValidator.assert_points(self.xs, "xs")
        ys = ArrayValidator.assert_points(self.ys, "ys")
        valid = np.ones(len(xs), dtype=bool) if self.valid_frames is None else np.asarray(self.valid_frames, dtype=bool)
        if not len(xs) == len(ys) == len(valid):
            raise StructuralError(f"PairSeries lengths differ: {len(xs)}, {len(ys)}, {len(valid)}")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "valid_frames", valid)

    @classmethod
    def from_lists(cls, xs: Sequence, ys: Sequence, valid_frames: Sequence = None) -> "PairSeries":
        return cls(np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64), valid_frames)


@dataclass(frozen=True)
class MrcModel:
    """Trained weight matrix W (Nv x Nn) and per-pair affine fits L_A, L_B (Nv x Nn x 2)."""

    W: np.ndarray
    L_A: np.ndarray
    L_B: np.ndarray
    rho_th: float
    corners: CornerSet

    def __post_init__(self):
        n_v, n_n = self.corners.n_vascular, self.corners.n_non_vascular
        for name, expected in (("W", (n_v, n_n)), ("L_A", (n_v, n_n, 2)), ("L_B", (n_v, n_n, 2))):
            array = np.array(getattr(self, name), dtype=np.float64)
            if array.shape != expected:
                raise StructuralError(f"{name} has shape {array.shape}, expected {expected}")
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def predictable(self) -> np.ndarray:
        """Vascular rows with at least one selected pair."""
        return self.W.sum(axis=1) > 0.0

    @property
    def n_vascular(self) -> int:
        return self.W.shape[0]

    @property
    def n_non_vascular(self) -> int:
        return self.W.shape[1]


def masked_moments(xs: np.ndarray, ys: np.ndarray, joint: np.ndarray) -> Tuple[np.ndarray, ...]:
    """Population moments of paired series over jointly valid frames.

    Args:
        xs, ys: Arrays of shape (k, *batch, 2), broadcastable against each other
        joint: Boolean array of shape (k, *batch)

    Returns:
        (count, mean_x, mean_y, var_x, var_y, cov); count has shape ``batch``,
        the rest ``batch + (2,)``
    """
    weight = joint.astype(np.float64)[..., None]
    count = weight.sum(axis=0)
    safe = np.maximum(count, 1.0)
    mean_x = (weight * xs).sum(axis=0) / safe
    mean_y = (weight * ys).sum(axis=0) / safe
    dx = (xs - mean_x) * weight
    dy = (ys - mean_y) * weight
    var_x = (dx * dx).sum(axis=0) / safe
    var_y = (dy * dy).sum(axis=0) / safe
    cov = (dx * dy).sum(axis=0) / safe
    return count[..., 0], mean_x, mean_y, var_x, var_y, cov


def correlation_defined(count: np.ndarray, var_x: np.ndarray, var_y: np.ndarray) -> np.ndarray:
    return (count >= MIN_CORRELATION_FRAMES) & np.all(var_x > VARIANCE_EPS, axis=-1) & np.all(var_y > VARIANCE_EPS, axis=-1)


def pearson_product(var_x: np.ndarray, var_y: np.ndarray, cov: np.ndarray, defined: np.ndarray) -> np.ndarray:
    """Product of the per-axis Pearson coefficients, 0 where undefined."""
    with np.errstate(divide="ignore", invalid="ignore"):
        per_axis = np.clip(cov / np.sqrt(var_x * var_y), -1.0, 1.0)
    rho = np.prod(per_axis, axis=-1)
    return np.where(defined, rho, 0.0)


def pearson(series: PairSeries) -> float:
    """Product of the x-axis and y-axis Pearson coefficients of a pair.

    Raises:
        UndefinedCorrelation: With fewer than 3 jointly valid frames or a constant axis
    """
    count, _, _, var_x, var_y, cov = masked_moments(series.xs, series.ys, series.valid_frames)
    if not correlation_defined(count, var_x, var_y):
        raise UndefinedCorrelation(
            "Pearson coefficient undefined",
            {"jointly_valid_frames": int(count), "var_x": var_x.tolist(), "var_y": var_y.tolist()},
        )
    return float(pearson_product(var_x, var_y, cov, np.bool_(True)))


def fit_pair(series: PairSeries) -> Tuple[float, float, float, float]:
    """Per-axis least-squares fit y = a * x + b.

    Returns:
        (a_x, b_x, a_y, b_y)

    Raises:
        FitError: With fewer than 2 jointly valid frames or a constant x axis
    """
    count, mean_x, mean_y, var_x, _, cov = masked_moments(series.xs, series.ys, series.valid_frames)
    if count < 2 or np.any(var_x <= VARIANCE_EPS):
        raise FitError("Degenerate least-squares fit", {"jointly_valid_frames": int(count)})
    slope = cov / var_x
    intercept = mean_y - slope * mean_x
    return float(slope[0]), float(intercept[0]), float(slope[1]), float(intercept[1])


def stack_flows(flows: Sequence[FlowSet], n_corners: int, what: str) -> Tuple[np.ndarray, np.ndarray]:
    """Stack per-frame FlowSets into (k, n, 2) displacements and (k, n) validity."""
    for flow in flows:
        if len(flow) != n_corners:
            raise StructuralError(
                f"{what} flow for frame {flow.target_index} has {len(flow)} entries, expected {n_corners}"
            )
    if not flows:
        return np.zeros((0, n_corners, 2)), np.zeros((0, n_corners), dtype=bool)
    return np.stack([f.displacements for f in flows]), np.stack([f.valid for f in flows])


def train(
    train_flows_v: Sequence[FlowSet],
    train_flows_n: Sequence[FlowSet],
    corners: CornerSet,
    rho_th: float = 0.9,
) -> MrcModel:
    """Estimate W, L_A and L_B from contrasted-frame flows.

    A pair is selected when its Pearson product exceeds ``rho_th``; its weight
    is the coefficient and its fit the per-axis least-squares line. Each row
    of W is normalized to sum 1; rows without a selected pair stay zero and
    are unpredictable.

    Raises:
        ValidationError: If ``rho_th`` is outside (0, 1]
        StructuralError: With fewer than 3 training frames or misaligned flows
        TrainingError: If no vascular row has a selected pair
    """
    if not 0.0 < rho_th <= 1.0:
        raise ValidationError(f"rho_th must lie in (0, 1], got {rho_th}", "range_check", rho_th)
    if len(train_flows_v) != len(train_flows_n):
        raise StructuralError(f"{len(train_flows_v)} vascular but {len(train_flows_n)} non-vascular training frames")
    if len(train_flows_v) < MIN_CORRELATION_FRAMES:
        raise StructuralError(
            f"Training needs at least {MIN_CORRELATION_FRAMES} frames, got {len(train_flows_v)}"
        )

    ys, valid_y = stack_flows(train_flows_v, corners.n_vascular, "vascular")
    xs, valid_x = stack_flows(train_flows_n, corners.n_non_vascular, "non-vascular")

    joint = valid_y[:, :, None] & valid_x[:, None, :]
    count, mean_x, mean_y, var_x, var_y, cov = masked_moments(xs[:, None, :, :], ys[:, :, None, :], joint)
    defined = correlation_defined(count, var_x, var_y)
    rho = pearson_product(var_x, var_y, cov, defined)

    selected = rho > rho_th
    weights = np.where(selected, rho, 0.0)
    row_sums = weights.sum(axis=1, keepdims=True)
    predictable = row_sums[:, 0] > 0.0
    weights = np.divide(weights, row_sums, out=np.zeros_like(weights), where=row_sums > 0.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(selected[..., None], cov / var_x, 0.0)
    intercept = np.where(selected[..., None], mean_y - slope * mean_x, 0.0)

    if not predictable.any():
        raise TrainingError(
            f"training failure: no vascular corner has a non-vascular partner with rho > {rho_th} "
            f"(rho_th too high or motion uncorrelated)",
            {"rho_th": rho_th, "max_rho": float(rho.max()) if rho.size else None},
        )
    n_unpredictable = int((~predictable).sum())
    if n_unpredictable:
        logger.warning(f"{n_unpredictable} of {len(predictable)} vascular corners have no correlated partner")
    logger.info(
        f"Trained motion-related model on {len(train_flows_v)} frames: "
        f"{int(selected.sum())} of {selected.size} pairs selected at rho_th={rho_th}"
    )
    return MrcModel(W=weights, L_A=slope, L_B=intercept, rho_th=rho_th, corners=corners)


def pair_predictions(model: MrcModel, live_flow_n: FlowSet) -> np.ndarray:
    """Per-pair candidate predictions L_A * f_j + L_B as an (Nv, Nn, 2) array."""
    if len(live_flow_n) != model.n_non_vascular:
        raise StructuralError(
            f"Live flow has {len(live_flow_n)} entries, model expects {model.n_non_vascular} non-vascular corners"
        )
    return model.L_A * live_flow_n.displacements[None, :, :] + model.L_B


def active_weights(model: MrcModel, live_flow_n: FlowSet) -> np.ndarray:
    """W with columns of lost live tracks zeroed (not renormalized)."""
    return model.W * live_flow_n.valid[None, :]


def weighted_prediction(weights: np.ndarray, candidates: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Row-renormalized weighted sum of candidates; returns (predictions, rows with weight)."""
    row_sums = weights.sum(axis=1)
    has_weight = row_sums > 0.0
    normalized = np.divide(weights, row_sums[:, None], out=np.zeros_like(weights), where=has_weight[:, None])
    return np.einsum("ij,ijc->ic", normalized, candidates), has_weight


def predict_plain(model: MrcModel, live_flow_n: FlowSet) -> FlowSet:
    """Predict vascular flows as the weighted mean of the selected pair predictions.

    Lost live tracks are dropped and each row's remaining weights renormalized.
    Rows left without weight are marked invalid.

    Raises:
        StructuralError: If the live flow does not match the model
        PredictionError: If every live track is invalid
    """
    candidates = pair_predictions(model, live_flow_n)
    if live_flow_n.n_valid == 0:
        raise PredictionError("All live non-vascular tracks are invalid", frame_index=live_flow_n.target_index)
    predictions, has_weight = weighted_prediction(active_weights(model, live_flow_n), candidates)
    return FlowSet(predictions, has_weight, target_index=live_flow_n.target_index)


def corrupt_flows(flow: FlowSet, fraction: float, magnitude_px: float, rng: np.random.Generator) -> FlowSet:
    """Offset a random ``fraction`` of the valid displacements by +-``magnitude_px`` per axis."""
    if not 0.0 <= fraction <= 1.0:
        raise ValidationError(f"fraction must lie in [0, 1], got {fraction}", "range_check", fraction)
    valid_idx = np.flatnonzero(flow.valid)
    n_corrupt = int(round(fraction * len(valid_idx)))
    displacements = flow.displacements.copy()
    if n_corrupt:
        chosen = rng.choice(valid_idx, size=n_corrupt, replace=False)
        signs = rng.choice(np.array([-1.0, 1.0]), size=(n_corrupt, 2))
        displacements[chosen] += signs * magnitude_px
    return FlowSet(displacements, flow.valid, target_index=flow.target_index)
