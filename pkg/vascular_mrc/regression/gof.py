"""
Gaussian-based outlier filtering of per-pair vascular predictions.

For each vascular corner the candidate predictions of its selected pairs
are screened against a single-pass 3-sigma band per axis; surviving
weights are renormalized before averaging.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..core.models import FlowSet
from ..utils.exceptions import PredictionError, StructuralError
from .mrc import MrcModel, active_weights, pair_predictions, weighted_prediction

logger = logging.getLogger(__name__)

SIGMA_BAND = 3.0
# Axes with a spread below this (px) keep every candidate.
DEGENERATE_SIGMA = 1e-9


@dataclass(frozen=True)
class CandidateSet:
    """Per-pair predictions and their activity flags.

    Shapes are (Nn, 2) and (Nn,) for one vascular corner, or (Nv, Nn, 2) and
    (Nv, Nn) for every corner at once.
    """

    predictions: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        predictions = np.asarray(self.predictions, dtype=np.float64)
        active = np.asarray(self.active, dtype=bool)
        if predictions.shape != active.shape + (2,):
            raise StructuralError(f"Candidates of shape {predictions.shape} do not match activity flags {active.shape}")
        object.__setattr__(self, "predictions", predictions)
        object.__setattr__(self, "active", active)

    @property
    def n_active(self) -> int:
        return int(self.active.sum())


@dataclass(frozen=True)
class GaussStats:
    mu: np.ndarray
    sigma: np.ndarray


def candidates(model: MrcModel, live_flow_n: FlowSet, i: int) -> CandidateSet:
    """Candidate predictions L_A[i, j] * f_j + L_B[i, j] for vascular corner ``i``.

    A candidate is active when its pair is selected and its live track valid.

    Raises:
        PredictionError: If corner ``i`` has no active candidate
    """
    if not 0 <= i < model.n_vascular:
        raise StructuralError(f"Vascular corner index {i} out of range 0..{model.n_vascular - 1}")
    predictions = pair_predictions(model, live_flow_n)[i]
    active = (model.W[i] > 0.0) & live_flow_n.valid
    if not active.any():
        raise PredictionError(
            f"Vascular corner {i} has no active candidate", frame_index=live_flow_n.target_index
        )
    return CandidateSet(predictions, active)


def gauss_stats(cands: CandidateSet) -> GaussStats:
    """Population mean and standard deviation per axis over active candidates."""
    if cands.n_active == 0:
        raise PredictionError("Gaussian statistics need at least one active candidate")
    values = cands.predictions[cands.active]
    return GaussStats(mu=values.mean(axis=0), sigma=values.std(axis=0))


def _band_mask(predictions: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Active candidates inside the open 3-sigma band on both axes; works on (..., Nn, 2) arrays."""
    weight = active.astype(np.float64)[..., None]
    count = np.maximum(weight.sum(axis=-2, keepdims=True), 1.0)
    mu = (weight * predictions).sum(axis=-2, keepdims=True) / count
    sigma = np.sqrt((weight * (predictions - mu) ** 2).sum(axis=-2, keepdims=True) / count)
    inside = (np.abs(predictions - mu) < SIGMA_BAND * sigma) | (sigma < DEGENERATE_SIGMA)
    return active & np.all(inside, axis=-1)


def filter_candidates(cands: CandidateSet) -> np.ndarray:
    """Surviving-candidate mask, shaped like ``cands.active``."""
    return _band_mask(cands.predictions, cands.active)


def filter_predict(model: MrcModel, live_flow_n: FlowSet) -> FlowSet:
    """Predict vascular flows with 3-sigma screening of the pair candidates.

    Corners whose every candidate is screened out fall back to the
    unfiltered weighted prediction and are flagged ``degraded``. Corners
    with no active candidate are invalid.

    Raises:
        StructuralError: If the live flow does not match the model
        PredictionError: If every live track is invalid
    """
    preds = pair_predictions(model, live_flow_n)
    if live_flow_n.n_valid == 0:
        raise PredictionError("All live non-vascular tracks are invalid", frame_index=live_flow_n.target_index)

    weights = active_weights(model, live_flow_n)
    active = weights > 0.0
    keep = filter_candidates(CandidateSet(preds, active))

    fallback = active.any(axis=1) & ~keep.any(axis=1)
    filtered_weights = np.where(keep | fallback[:, None], weights, 0.0)
    predictions, has_weight = weighted_prediction(filtered_weights, preds)

    n_deleted = int(active.sum() - keep.sum())
    if np.any(fallback):
        logger.warning(
            f"Frame {live_flow_n.target_index}: {int(fallback.sum())} vascular corners lost every "
            f"candidate to outlier filtering; using unfiltered prediction"
        )
    logger.debug(f"Frame {live_flow_n.target_index}: outlier filtering removed {n_deleted} candidates")
    return FlowSet(predictions, has_weight, target_index=live_flow_n.target_index, degraded=fallback)
