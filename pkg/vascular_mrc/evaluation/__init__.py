"""
Evaluation package for vascular_mrc.
"""

from .metrics import FrameScore, mean_distance, ratio_R, score_frame, summarize_scores, write_scores_csv
from .timing import TimingReport, time_pipeline

__all__ = [
    "FrameScore",
    "mean_distance",
    "ratio_R",
    "score_frame",
    "summarize_scores",
    "write_scores_csv",
    "TimingReport",
    "time_pipeline",
]
