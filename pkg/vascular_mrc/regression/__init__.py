"""
Regression package for vascular_mrc.

The linear motion-related model, Gaussian outlier filtering and the
Gaussian process ensemble.
"""

from .mrc import MrcModel, predict_plain, train
from .gof import filter_predict
from .gpr import GprEnsemble, predict_ensemble, train_ensemble

__all__ = [
    "MrcModel",
    "predict_plain",
    "train",
    "filter_predict",
    "GprEnsemble",
    "predict_ensemble",
    "train_ensemble",
]
