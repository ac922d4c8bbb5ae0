"""
Compensator using the Gaussian process ensemble instead of linear pair fits.
"""

import logging
from typing import List

from ..core.models import FlowSet
from ..regression import gpr
from .base_compensator import MotionCompensator

logger = logging.getLogger(__name__)


class GprCompensator(MotionCompensator):
    """Motion compensator whose vascular predictions come from a GP ensemble.

    Outlier filtering is replaced by the ensemble's variance-based deletion,
    so the ``gof`` setting has no effect here.
    """

    regressor_name = "gpr"

    def _fit(self, flows_v: List[FlowSet], flows_n: List[FlowSet]) -> gpr.GprEnsemble:
        params = self.config_manager.gpr_params()
        return gpr.train_ensemble(
            flows_v,
            flows_n,
            self.corners,
            sigma_n=params.sigma_n,
            kernel=params.kernel,
            vbar_th=params.vbar_th,
            threads=self.config.threads,
        )

    def _predict_flows(self, live_flow_n: FlowSet) -> FlowSet:
        return gpr.predict_ensemble(self.model, live_flow_n)
