"""
Accuracy metrics for warped vessel masks.

R is the fraction of ground-truth centerline pixels covered by the warped
mask. MD is the mean distance, in millimeters, from each ground-truth
centerline pixel to the nearest pixel of the warped centerline; a filled
warped mask is thinned to its centerline first.
"""

import csv
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree
from skimage.morphology import skeletonize

from ..core.models import VesselMask
from ..utils.exceptions import EvaluationError, ImageIOError
from ..utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

SCORE_COLUMNS = ["frame_index", "R", "MD_mm", "predict_ms", "baseline_R", "baseline_MD_mm"]


@dataclass(frozen=True)
class FrameScore:
    """Scores of one live frame."""

    frame_index: int
    R: float
    MD: float
    n_gt_points: int
    predict_ms: Optional[float] = None
    baseline_R: Optional[float] = None
    baseline_MD: Optional[float] = None


def centerline_of(mask: VesselMask) -> VesselMask:
    """One-pixel-wide centerline of a mask; centerline masks are returned unchanged."""
    if mask.kind == "centerline":
        return mask
    return VesselMask(skeletonize(np.array(mask.bits)), kind="centerline")


def ratio_R(gt: VesselMask, warped: VesselMask) -> float:
    """Fraction of ground-truth centerline pixels covered by the warped mask.

    Raises:
        StructuralError: If the masks differ in size
        EvaluationError: If the ground-truth centerline is empty
    """
    ArrayValidator.assert_same_shape(gt.bits, warped.bits, "ground truth and warped mask")
    n_gt = gt.count()
    if n_gt == 0:
        raise EvaluationError("Ground-truth centerline is empty")
    return float(np.count_nonzero(gt.bits & warped.bits)) / n_gt


def mean_distance(gt: VesselMask, warped: VesselMask, pixel_spacing: float) -> float:
    """Mean nearest-point distance from ground-truth centerline pixels to the warped centerline, in mm.

    Raises:
        StructuralError: If the masks differ in size
        EvaluationError: If either centerline is empty
    """
    ArrayValidator.assert_same_shape(gt.bits, warped.bits, "ground truth and warped mask")
    gt_points = gt.points()
    if len(gt_points) == 0:
        raise EvaluationError("Ground-truth centerline is empty")
    warped_points = centerline_of(warped).points()
    if len(warped_points) == 0:
        raise EvaluationError("Warped centerline is empty")
    distances, _ = cKDTree(warped_points).query(gt_points, k=1)
    return float(np.mean(distances)) * pixel_spacing


def score_frame(
    gt: VesselMask,
    warped: VesselMask,
    pixel_spacing: float,
    frame_index: int,
    predict_ms: Optional[float] = None,
    baseline: Optional[VesselMask] = None,
) -> FrameScore:
    """Score one warped mask, and optionally an uncompensated baseline mask, against ``gt``."""
    baseline_R = baseline_MD = None
    if baseline is not None:
        baseline_R = ratio_R(gt, baseline)
        baseline_MD = mean_distance(gt, baseline, pixel_spacing)
    return FrameScore(
        frame_index=frame_index,
        R=ratio_R(gt, warped),
        MD=mean_distance(gt, warped, pixel_spacing),
        n_gt_points=gt.count(),
        predict_ms=predict_ms,
        baseline_R=baseline_R,
        baseline_MD=baseline_MD,
    )


def summarize_scores(scores: Sequence[FrameScore]) -> Dict[str, Dict[str, float]]:
    """Mean, median, quartiles and range of R and MD over frames."""
    if not scores:
        raise EvaluationError("No frame scores to summarize")
    summary = {}
    for name, values in (("R", [s.R for s in scores]), ("MD_mm", [s.MD for s in scores])):
        array = np.asarray(values, dtype=np.float64)
        summary[name] = {
            "mean": float(np.mean(array)),
            "median": float(np.median(array)),
            "q1": float(np.percentile(array, 25)),
            "q3": float(np.percentile(array, 75)),
            "min": float(np.min(array)),
            "max": float(np.max(array)),
        }
    return summary


def _column_values(scores: Sequence[FrameScore]) -> Dict[str, List[Optional[float]]]:
    return {
        "R": [s.R for s in scores],
        "MD_mm": [s.MD for s in scores],
        "predict_ms": [s.predict_ms for s in scores],
        "baseline_R": [s.baseline_R for s in scores],
        "baseline_MD_mm": [s.baseline_MD for s in scores],
    }


def _format(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def write_scores_csv(scores: Sequence[FrameScore], path: Union[str, Path]) -> None:
    """Write per-frame rows plus ``mean`` and ``median`` summary rows.

    Empty cells mark values that were not measured.
    """
    path = Path(path)
    columns = _column_values(scores)
    try:
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(SCORE_COLUMNS)
            for score in scores:
                writer.writerow(
                    [
                        score.frame_index,
                        _format(score.R),
                        _format(score.MD),
                        _format(score.predict_ms),
                        _format(score.baseline_R),
                        _format(score.baseline_MD),
                    ]
                )
            for label, reducer in (("mean", np.mean), ("median", np.median)):
                row = [label]
                for name in SCORE_COLUMNS[1:]:
                    present = [v for v in columns[name] if v is not None]
                    row.append(_format(reducer(present)) if present else "")
                writer.writerow(row)
    except OSError as e:
        raise ImageIOError(f"Cannot write scores to {path}: {e}", path=str(path))
    logger.info(f"Wrote {len(scores)} frame scores to {path}")


def scores_as_dicts(scores: Iterable[FrameScore]) -> List[Dict[str, object]]:
    """One plain dictionary per frame score, for tabular and JSON output."""
    return [asdict(score) for score in scores]
