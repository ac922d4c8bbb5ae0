"""
Gaussian process regression alternative to the linear pair fits.

One scalar GP per (vascular corner, non-vascular corner, axis) maps the
non-vascular displacement to the vascular one. Hyperparameters (c, eta)
maximize the log marginal likelihood; ensemble predictions are combined by
inverse-variance weighting and deleted when the combined variance exceeds
a threshold.

The default kernel is ``c * exp(-|x - x'| / (2 eta^2))``; ``kernel="squared"``
uses ``(x - x')^2`` in the exponent instead.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, get_args

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ..core.models import CornerSet, FlowSet, KernelKind
from ..utils.exceptions import (
    FactorizationError,
    OptimizationError,
    PredictionError,
    StructuralError,
    ValidationError,
)
from .mrc import MIN_CORRELATION_FRAMES, stack_flows

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-12
AUTO_THRESHOLD_PERCENTILE = 95.0
MAX_ITERATIONS = 200
CONVERGENCE_TOL = 1e-8
START_SCALES = (0.1, 1.0, 10.0)
_START_EPS = 1e-6
_JITTER_START = 1e-10
_JITTER_MAX = 1e-6
_LOG_BOUND = 25.0
_MAX_BACKTRACKS = 40
_LOG_2PI = np.log(2.0 * np.pi)


def _distance(xa: np.ndarray, xb: np.ndarray, kernel: KernelKind) -> np.ndarray:
    if kernel not in get_args(KernelKind):
        raise ValidationError(f"Unknown kernel {kernel!r}", validation_type="kernel", invalid_value=kernel)
    delta = np.subtract.outer(np.asarray(xa, dtype=np.float64), np.asarray(xb, dtype=np.float64))
    return np.abs(delta) if kernel == "paper" else delta * delta


def rbf(x, x2, c: float, eta: float, kernel: KernelKind = "paper"):
    """Kernel value(s) between ``x`` and ``x2``; arrays give the outer-product matrix."""
    if c <= 0 or eta <= 0:
        raise ValidationError(
            f"Kernel parameters must be positive, got c={c}, eta={eta}",
            validation_type="kernel_parameters",
            invalid_value={"c": c, "eta": eta},
        )
    return c * np.exp(-_distance(x, x2, kernel) / (2.0 * eta * eta))


def factorize(K: np.ndarray, sigma_n: float, c: float = None, eta: float = None) -> Tuple[tuple, float]:
    """Cholesky factor of K + sigma_n^2 I, adding jitter from 1e-10 up to 1e-6 on failure.

    Returns:
        (factor, jitter) where ``factor`` is a ``cho_factor`` result

    Raises:
        FactorizationError: If the matrix stays indefinite at the largest jitter
    """
    n = K.shape[0]
    base = K + (sigma_n * sigma_n) * np.eye(n)
    jitter = 0.0
    while True:
        try:
            return cho_factor(base + jitter * np.eye(n), lower=True, check_finite=True), jitter
        except (LinAlgError, ValueError):
            jitter = _JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_MAX * (1.0 + 1e-9):
                raise FactorizationError(
                    "Covariance matrix is not positive definite", c=float(c) if c else None,
                    eta=float(eta) if eta else None,
                )


@dataclass(frozen=True)
class GprPairModel:
    """A trained scalar GP with its cached factorization."""

    train_x: np.ndarray
    train_y: np.ndarray
    c: float
    eta: float
    sigma_n: float
    kernel: KernelKind = "paper"
    factor: tuple = field(default=None, repr=False, compare=False)
    alpha: np.ndarray = field(default=None, repr=False, compare=False)

    @classmethod
    def build(
        cls, train_x: Sequence[float], train_y: Sequence[float], c: float, eta: float,
        sigma_n: float, kernel: KernelKind = "paper",
    ) -> "GprPairModel":
        """Factorize the training covariance and cache ``alpha = (K + sigma_n^2 I)^-1 y``."""
        if c <= 0 or eta <= 0 or sigma_n < 0:
            raise StructuralError(f"Invalid GP parameters c={c}, eta={eta}, sigma_n={sigma_n}")
        xs = np.array(train_x, dtype=np.float64).reshape(-1)
        ys = np.array(train_y, dtype=np.float64).reshape(-1)
        if len(xs) != len(ys) or len(xs) == 0:
            raise StructuralError(f"GP needs matching non-empty training data, got {len(xs)} and {len(ys)}")
        factor, _ = factorize(rbf(xs, xs, c, eta, kernel), sigma_n, c, eta)
        alpha = cho_solve(factor, ys)
        for array in (xs, ys, alpha):
            array.setflags(write=False)
        return cls(xs, ys, float(c), float(eta), float(sigma_n), kernel, factor, alpha)

    @property
    def n_train(self) -> int:
        return len(self.train_x)


def lml_and_gradient(
    xs: np.ndarray, ys: np.ndarray, c: float, eta: float, sigma_n: float, kernel: KernelKind = "paper"
) -> Tuple[float, np.ndarray]:
    """Log marginal likelihood and its gradient with respect to (c, eta).

    The gradient uses ``0.5 * tr((alpha alpha^T - Ky^-1) dK/dtheta)`` with
    ``dK/dc = K / c`` and ``dK/deta = K * r / eta^3``.

    Raises:
        FactorizationError: If K + sigma_n^2 I cannot be factorized
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    n = len(xs)
    r = _distance(xs, xs, kernel)
    K = c * np.exp(-r / (2.0 * eta * eta))
    factor, _ = factorize(K, sigma_n, c, eta)
    alpha = cho_solve(factor, ys)
    log_det = 2.0 * np.sum(np.log(np.diag(factor[0])))
    value = -0.5 * float(ys @ alpha) - 0.5 * log_det - 0.5 * n * _LOG_2PI

    inner = np.outer(alpha, alpha) - cho_solve(factor, np.eye(n))
    d_c = 0.5 * np.sum(inner * (K / c))
    d_eta = 0.5 * np.sum(inner * (K * r / eta ** 3))
    return value, np.array([d_c, d_eta])


def log_marginal_likelihood(m: GprPairModel) -> Tuple[float, np.ndarray]:
    """Log marginal likelihood of a trained model and its (c, eta) gradient."""
    return lml_and_gradient(m.train_x, m.train_y, m.c, m.eta, m.sigma_n, m.kernel)


def _ascend(xs, ys, sigma_n, kernel, theta0: np.ndarray) -> Tuple[np.ndarray, float]:
    """Backtracking gradient ascent on log(c), log(eta); never accepts a decreasing step."""

    def objective(theta):
        c, eta = np.exp(theta)
        value, grad = lml_and_gradient(xs, ys, c, eta, sigma_n, kernel)
        return value, grad * np.array([c, eta])

    theta = np.clip(theta0, -_LOG_BOUND, _LOG_BOUND)
    value, grad = objective(theta)
    rate = 0.5
    for _ in range(MAX_ITERATIONS):
        step = rate
        accepted = None
        for _ in range(_MAX_BACKTRACKS):
            candidate = np.clip(theta + step * grad, -_LOG_BOUND, _LOG_BOUND)
            try:
                cand_value, cand_grad = objective(candidate)
            except FactorizationError:
                step *= 0.5
                continue
            if np.isfinite(cand_value) and cand_value >= value:
                accepted = (candidate, cand_value, cand_grad)
                break
            step *= 0.5
        if accepted is None:
            break
        gain = accepted[1] - value
        theta, value, grad = accepted
        rate = min(step * 2.0, 10.0)
        if gain < CONVERGENCE_TOL:
            break
    return theta, value


def optimize_hyperparams(
    train_x: Sequence[float], train_y: Sequence[float], sigma_n: float, kernel: KernelKind = "paper"
) -> Tuple[float, float]:
    """Maximize the log marginal likelihood over (c, eta) from a 3x3 grid of starts.

    Returns:
        (c, eta) of the best start

    Raises:
        StructuralError: With fewer than 3 training points
        OptimizationError: If every start fails to factorize
    """
    xs = np.asarray(train_x, dtype=np.float64).reshape(-1)
    ys = np.asarray(train_y, dtype=np.float64).reshape(-1)
    if len(xs) < MIN_CORRELATION_FRAMES or len(xs) != len(ys):
        raise StructuralError(f"GP hyperparameter search needs >= {MIN_CORRELATION_FRAMES} points, got {len(xs)}")

    c_base = float(np.var(ys))
    spread = np.abs(np.subtract.outer(xs, xs))[np.triu_indices(len(xs), k=1)]
    eta_base = float(np.median(spread))

    best: Optional[Tuple[np.ndarray, float]] = None
    for c_scale in START_SCALES:
        for eta_scale in START_SCALES:
            start = np.log([c_scale * c_base + _START_EPS, eta_scale * eta_base + _START_EPS])
            try:
                theta, value = _ascend(xs, ys, sigma_n, kernel, start)
            except FactorizationError as e:
                logger.debug(f"GP start c={np.exp(start[0]):.3g} eta={np.exp(start[1]):.3g} failed: {e}")
                continue
            if best is None or value > best[1]:
                best = (theta, value)

    if best is None:
        raise OptimizationError("Every hyperparameter start failed to factorize", {"n_points": len(xs)})
    c, eta = np.exp(best[0])
    return float(c), float(eta)


def gpr_predict(m: GprPairModel, x_star) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance (clamped at 0) at ``x_star`` under a zero mean function."""
    scalar = np.ndim(x_star) == 0
    x_star = np.atleast_1d(np.asarray(x_star, dtype=np.float64))
    k_star = rbf(m.train_x, x_star, m.c, m.eta, m.kernel)
    mean = k_star.T @ m.alpha
    solved = cho_solve(m.factor, k_star)
    variance = np.maximum(m.c - np.sum(k_star * solved, axis=0), 0.0)
    if scalar:
        return mean[0], variance[0]
    return mean, variance


def loo_latent_variances(m: GprPairModel) -> np.ndarray:
    """Closed-form leave-one-out latent variances ``1 / [Ky^-1]_mm - sigma_n^2``, clamped at 0."""
    inverse = cho_solve(m.factor, np.eye(m.n_train))
    return np.maximum(1.0 / np.diag(inverse) - m.sigma_n ** 2, 0.0)


def combine_predictions(preds: np.ndarray, variances: np.ndarray) -> Tuple[float, float, np.ndarray]:
    """Inverse-variance combination of pair predictions.

    Returns:
        (mean, combined variance sum(w * v), normalized weights)
    """
    preds = np.asarray(preds, dtype=np.float64)
    floored = np.maximum(np.asarray(variances, dtype=np.float64), VARIANCE_FLOOR)
    weights = 1.0 / floored
    weights /= weights.sum()
    return float(weights @ preds), float(weights @ floored), weights


@dataclass(frozen=True)
class GprEnsemble:
    """Nv x Nn x 2 pair models; ``None`` marks an untrained pair."""

    models: Tuple[Tuple[Tuple[Optional[GprPairModel], ...], ...], ...]
    v_threshold: float
    corners: CornerSet
    sigma_n: float = 0.01
    kernel: KernelKind = "paper"

    @property
    def n_vascular(self) -> int:
        return self.corners.n_vascular

    @property
    def n_non_vascular(self) -> int:
        return self.corners.n_non_vascular

    @property
    def trained(self) -> np.ndarray:
        """(Nv, Nn, 2) flags of trained pair models."""
        return np.array(
            [[[m is not None for m in axes] for axes in row] for row in self.models], dtype=bool
        ).reshape(self.n_vascular, self.n_non_vascular, 2)

    def model_count(self) -> int:
        return self.n_vascular * self.n_non_vascular * 2


def _fit_pair_axis(xs: np.ndarray, ys: np.ndarray, sigma_n: float, kernel: KernelKind) -> Optional[GprPairModel]:
    if len(xs) < MIN_CORRELATION_FRAMES:
        return None
    try:
        c, eta = optimize_hyperparams(xs, ys, sigma_n, kernel)
        return GprPairModel.build(xs, ys, c, eta, sigma_n, kernel)
    except (OptimizationError, FactorizationError) as e:
        logger.warning(f"GP pair left untrained: {e}")
        return None


def _automatic_threshold(
    models: List[List[List[Optional[GprPairModel]]]],
    frame_ids: List[List[np.ndarray]],
    n_frames: int,
) -> float:
    """95th percentile of leave-one-frame-out combined variances over corners, axes and frames."""
    combined: List[float] = []
    for i, row in enumerate(models):
        for axis in range(2):
            per_frame: List[List[float]] = [[] for _ in range(n_frames)]
            for j, axes in enumerate(row):
                model = axes[axis]
                if model is None:
                    continue
                for frame, variance in zip(frame_ids[i][j], loo_latent_variances(model)):
                    per_frame[frame].append(variance)
            for variances in per_frame:
                if variances:
                    combined.append(combine_predictions(np.zeros(len(variances)), variances)[1])
    if not combined:
        return float("inf")
    return float(np.percentile(combined, AUTO_THRESHOLD_PERCENTILE))


def train_ensemble(
    train_flows_v: Sequence[FlowSet],
    train_flows_n: Sequence[FlowSet],
    corners: CornerSet,
    sigma_n: float = 0.01,
    kernel: KernelKind = "paper",
    vbar_th: Optional[float] = None,
    threads: int = 1,
) -> GprEnsemble:
    """Fit one GP per (vascular, non-vascular, axis) triple on jointly valid frames.

    Pairs with fewer than 3 jointly valid frames, or whose optimization
    fails, are left untrained. ``vbar_th=None`` derives the deletion
    threshold from leave-one-out variances of the training data.

    Raises:
        StructuralError: With fewer than 3 training frames or misaligned flows
    """
    if len(train_flows_v) != len(train_flows_n):
        raise StructuralError(f"{len(train_flows_v)} vascular but {len(train_flows_n)} non-vascular training frames")
    if len(train_flows_v) < MIN_CORRELATION_FRAMES:
        raise StructuralError(f"GPR training needs at least {MIN_CORRELATION_FRAMES} frames, got {len(train_flows_v)}")

    ys, valid_y = stack_flows(train_flows_v, corners.n_vascular, "vascular")
    xs, valid_x = stack_flows(train_flows_n, corners.n_non_vascular, "non-vascular")
    n_v, n_n = corners.n_vascular, corners.n_non_vascular

    tasks = []
    frame_ids: List[List[np.ndarray]] = []
    for i in range(n_v):
        row_ids = []
        for j in range(n_n):
            frames = np.flatnonzero(valid_y[:, i] & valid_x[:, j])
            row_ids.append(frames)
            for axis in range(2):
                tasks.append((xs[frames, j, axis], ys[frames, i, axis]))
        frame_ids.append(row_ids)

    def run(task):
        return _fit_pair_axis(task[0], task[1], sigma_n, kernel)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fitted = list(pool.map(run, tasks))
    else:
        fitted = [run(task) for task in tasks]

    models = [
        [[fitted[(i * n_n + j) * 2 + axis] for axis in range(2)] for j in range(n_n)]
        for i in range(n_v)
    ]
    if vbar_th is None:
        vbar_th = _automatic_threshold(models, frame_ids, len(train_flows_v))
        logger.info(f"Automatic combined-variance threshold: {vbar_th:.6g}")

    n_trained = sum(m is not None for m in fitted)
    logger.info(f"Trained {n_trained} of {len(fitted)} GP pair models on {len(train_flows_v)} frames")
    return GprEnsemble(
        models=tuple(tuple(tuple(axes) for axes in row) for row in models),
        v_threshold=float(vbar_th),
        corners=corners,
        sigma_n=sigma_n,
        kernel=kernel,
    )


def ensemble_statistics(e: GprEnsemble, live_flow_n: FlowSet) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Combined predictions, combined variances and usability, each (Nv, 2).

    An axis of a corner is usable when at least one trained pair model has
    a valid live track.
    """
    if len(live_flow_n) != e.n_non_vascular:
        raise StructuralError(
            f"Live flow has {len(live_flow_n)} entries, ensemble expects {e.n_non_vascular} non-vascular corners"
        )
    means = np.zeros((e.n_vascular, 2))
    vbar = np.full((e.n_vascular, 2), np.inf)
    usable = np.zeros((e.n_vascular, 2), dtype=bool)
    live = live_flow_n.displacements
    for i, row in enumerate(e.models):
        for axis in range(2):
            preds, variances = [], []
            for j, axes in enumerate(row):
                model = axes[axis]
                if model is None or not live_flow_n.valid[j]:
                    continue
                mean, variance = gpr_predict(model, live[j, axis])
                preds.append(mean)
                variances.append(variance)
            if preds:
                means[i, axis], vbar[i, axis], _ = combine_predictions(np.array(preds), np.array(variances))
                usable[i, axis] = True
    return means, vbar, usable


def predict_ensemble(e: GprEnsemble, live_flow_n: FlowSet) -> FlowSet:
    """Inverse-variance ensemble prediction with uncertainty-based deletion.

    A corner is invalid when either axis has no usable pair model or its
    combined variance exceeds ``e.v_threshold``.

    Raises:
        PredictionError: If every live track is invalid
    """
    if live_flow_n.n_valid == 0:
        raise PredictionError("All live non-vascular tracks are invalid", frame_index=live_flow_n.target_index)
    means, vbar, usable = ensemble_statistics(e, live_flow_n)
    valid = np.all(usable, axis=1) & np.all(vbar <= e.v_threshold, axis=1)
    deleted = int(np.all(usable, axis=1).sum() - valid.sum())
    if deleted:
        logger.debug(f"Frame {live_flow_n.target_index}: {deleted} corners deleted for combined variance above threshold")
    return FlowSet(means, valid, target_index=live_flow_n.target_index)
