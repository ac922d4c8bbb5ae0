"""
Motion compensation pipeline built on the motion-related model.

A compensator learns from the contrasted segment of a sequence (corner
detection, tracking to the reference, model training) and then predicts
each live frame (tracking of non-vascular corners, vascular prediction,
mask warping).
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import ConfigManager
from ..core.models import CornerSet, FlowSet, Frame, FluoroSequence, VesselMask
from ..motion.features import detect_corners, grid_corner_set
from ..motion.tracking import full_frame_roi, track_dense_grid, track_sparse
from ..motion.warp import SparseField, warp_mask
from ..regression import gof, mrc
from ..utils.exceptions import CompensationError, TrainingError

logger = logging.getLogger(__name__)

# (positions, frame) -> displacements of ``positions`` from the reference to ``frame``.
FlowSource = Callable[[np.ndarray, Frame], FlowSet]


@dataclass(frozen=True)
class FramePrediction:
    """Predicted vascular flow and warped mask for one live frame."""

    frame_index: int
    flows: FlowSet
    warped: VesselMask
    elapsed_s: float


def split_flows(flows: FlowSet, n_vascular: int) -> Tuple[FlowSet, FlowSet]:
    """Split a FlowSet over vascular-then-non-vascular positions into its two parts."""
    d, v = flows.displacements, flows.valid
    return (
        FlowSet(d[:n_vascular], v[:n_vascular], target_index=flows.target_index),
        FlowSet(d[n_vascular:], v[n_vascular:], target_index=flows.target_index),
    )


class MotionCompensator:
    """Learns the motion-related model and predicts vascular motion on live frames."""

    regressor_name = "mrc"

    def __init__(self, config_manager: ConfigManager, flow_source: Optional[FlowSource] = None):
        """Initialize the compensator.

        Args:
            config_manager: ConfigManager instance with loaded configuration
            flow_source: Optional replacement for LK tracking, e.g. phantom ground truth
        """
        self.config_manager = config_manager
        self.config = config_manager.config
        self.flow_source = flow_source
        self.reference: Optional[Frame] = None
        self.reference_mask: Optional[VesselMask] = None
        self.corners: Optional[CornerSet] = None
        self.model = None
        self._rng = np.random.default_rng(self.config.seed)
        logger.info(f"{type(self).__name__} initialized ({self.config.flow_mode} flows, gof={self.config.gof})")

    # ------------------------------------------------------------------
    # Flows
    # ------------------------------------------------------------------

    def track(self, positions: np.ndarray, frame: Frame) -> FlowSet:
        """Displacements of ``positions`` from the reference to ``frame``."""
        if self.flow_source is not None:
            return self.flow_source(positions, frame)
        return track_sparse(
            self.reference, frame, positions, self.config_manager.lk_params(), threads=self.config.threads
        )

    def _select_corners(self) -> Tuple[CornerSet, Optional[np.ndarray]]:
        """Corners for the configured flow mode; dense mode also returns grid membership."""
        if self.config.flow_mode == "dense":
            roi = full_frame_roi(self.reference.shape, self.config.corner_margin)
            return grid_corner_set(self.reference_mask, roi, self.config.dense_stride, self.config.mask_dilation)
        return detect_corners(self.reference, self.reference_mask, self.config_manager.corner_params()), None

    def _training_flows(self, frames: Sequence[Frame], membership: Optional[np.ndarray]) -> Tuple[List[FlowSet], List[FlowSet]]:
        flows_v, flows_n = [], []
        positions = np.vstack([self.corners.vascular, self.corners.non_vascular])
        for frame in frames:
            if membership is not None and self.flow_source is None:
                roi = full_frame_roi(self.reference.shape, self.config.corner_margin)
                grid = track_dense_grid(
                    self.reference, frame, roi, self.config.dense_stride,
                    self.config_manager.lk_params(), threads=self.config.threads,
                )
                flow_v = FlowSet(grid.displacements[membership], grid.valid[membership], target_index=frame.index)
                flow_n = FlowSet(grid.displacements[~membership], grid.valid[~membership], target_index=frame.index)
            else:
                flow_v, flow_n = split_flows(self.track(positions, frame), self.corners.n_vascular)
            flows_v.append(flow_v)
            flows_n.append(flow_n)
        return flows_v, flows_n

    # ------------------------------------------------------------------
    # Learning
    # ------------------------------------------------------------------

    def learn(self, sequence: FluoroSequence, mask: VesselMask):
        """Detect corners on the reference, track every contrasted frame and train the model.

        All contrasted frames, the reference included, are training frames.

        Raises:
            DetectionError: If either corner set is empty
            TrainingError: If no vascular corner can be predicted
        """
        self.reference = sequence.reference
        self.reference_mask = mask
        self.corners, membership = self._select_corners()
        flows_v, flows_n = self._training_flows(sequence.contrasted_frames, membership)
        self.model = self._fit(flows_v, flows_n)
        logger.info(
            f"Learned {self.regressor_name} model from {len(flows_v)} contrasted frames "
            f"({self.corners.n_vascular} vascular x {self.corners.n_non_vascular} non-vascular corners)"
        )
        return self.model

    def _fit(self, flows_v: List[FlowSet], flows_n: List[FlowSet]):
        return mrc.train(flows_v, flows_n, self.corners, self.config.rho_th)

    def attach(self, model, reference: Frame, mask: VesselMask) -> None:
        """Use a previously trained model with its reference frame and mask."""
        self.model = model
        self.corners = model.corners
        self.reference = reference
        self.reference_mask = mask

    # ------------------------------------------------------------------
    # Prediction
    # ------------------------------------------------------------------

    def _require_model(self) -> None:
        if self.model is None or self.reference is None:
            raise TrainingError("Compensator has no trained model; call learn() or attach() first")

    def live_flows(self, frame: Frame) -> FlowSet:
        """Non-vascular flows of a live frame, corrupted when ``corrupt_fraction`` > 0."""
        flows = self.track(self.corners.non_vascular, frame)
        if self.config.corrupt_fraction > 0:
            flows = mrc.corrupt_flows(flows, self.config.corrupt_fraction, self.config.corrupt_px, self._rng)
        return flows

    def _predict_flows(self, live_flow_n: FlowSet) -> FlowSet:
        if self.config.gof:
            return gof.filter_predict(self.model, live_flow_n)
        return mrc.predict_plain(self.model, live_flow_n)

    def predict_flows(self, frame: Frame) -> FlowSet:
        """Predicted vascular corner flows for a live frame."""
        self._require_model()
        return self._predict_flows(self.live_flows(frame))

    def predict_frame(self, frame: Frame) -> FramePrediction:
        """Track, predict and warp the reference mask onto a live frame.

        Raises:
            PredictionError: If no live track is valid
            WarpError: If no vascular corner could be predicted
        """
        self._require_model()
        start = time.perf_counter()
        flows = self.predict_flows(frame)
        field = SparseField.from_flows(self.corners.vascular, flows)
        warped = warp_mask(self.reference_mask, field, self.config_manager.warp_params())
        elapsed = time.perf_counter() - start
        logger.debug(f"Frame {frame.index}: {flows.n_valid}/{len(flows)} vascular corners predicted in {elapsed * 1000.0:.1f} ms")
        return FramePrediction(frame_index=frame.index, flows=flows, warped=warped, elapsed_s=elapsed)

    def warm_up(self, frame: Frame) -> None:
        """Run one untimed prediction; the corruption stream is left where it was."""
        state = self._rng.bit_generator.state
        self.predict_frame(frame)
        self._rng.bit_generator.state = state

    def predict_sequence(self, frames: Sequence[Frame], warmup: bool = False) -> List[FramePrediction]:
        """Predict every frame in order; a failing frame aborts the run.

        With ``warmup`` the first frame is predicted once, untimed and
        discarded, before the timed pass.
        """
        frames = list(frames)
        if warmup and frames:
            self.warm_up(frames[0])
        predictions = []
        for frame in frames:
            try:
                predictions.append(self.predict_frame(frame))
            except CompensationError as e:
                logger.error(f"Prediction failed on frame {frame.index}: {e}")
                raise
        return predictions

    def static_roadmap(self) -> VesselMask:
        """The uncompensated roadmap: the reference mask as is."""
        self._require_model()
        return self.reference_mask
