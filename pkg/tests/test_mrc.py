"""
Tests for the linear motion-related model.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vascular_mrc.core.models import CornerSet, FlowSet
from vascular_mrc.regression.mrc import (
    MrcModel,
    PairSeries,
    corrupt_flows,
    fit_pair,
    pearson,
    predict_plain,
    train,
)
from vascular_mrc.utils.exceptions import (
    FitError,
    PredictionError,
    StructuralError,
    TrainingError,
    UndefinedCorrelation,
    ValidationError,
)


def corners(n_v: int, n_n: int) -> CornerSet:
    return CornerSet(np.arange(n_v * 2, dtype=float).reshape(n_v, 2), 100.0 + np.arange(n_n * 2, dtype=float).reshape(n_n, 2))


def flows_of(series: np.ndarray, valid: np.ndarray = None):
    """One FlowSet per frame from a (k, n, 2) array."""
    if valid is None:
        valid = np.ones(series.shape[:2], dtype=bool)
    return [FlowSet(series[t], valid[t], target_index=t) for t in range(len(series))]


def affine_problem(rng: np.random.Generator, n_v: int, n_n: int, k: int):
    """Non-vascular motion driven by one breathing signal; vascular motion affine in it."""
    t = np.arange(k, dtype=float)
    signal = np.column_stack([np.sin(0.7 * t), np.cos(0.5 * t)])
    xs = signal[:, None, :] * rng.uniform(0.5, 2.0, size=(1, n_n, 2)) + rng.uniform(-1, 1, size=(1, n_n, 2))
    ys = signal[:, None, :] * rng.uniform(0.5, 2.0, size=(1, n_v, 2)) + rng.uniform(-1, 1, size=(1, n_v, 2))
    return xs, ys


def hand_model(W, L_A, L_B) -> MrcModel:
    W = np.asarray(W, dtype=float)
    return MrcModel(W=W, L_A=np.asarray(L_A, dtype=float), L_B=np.asarray(L_B, dtype=float), rho_th=0.9, corners=corners(*W.shape))


class TestPearson:
    """Test cases for pearson and fit_pair."""

    def test_perfect_affine(self):
        """Test a coefficient of one for positively affine series."""
        xs = np.array([[0.0, 1.0], [1.0, 3.0], [2.0, 2.0], [4.0, 0.0]])
        assert pearson(PairSeries(xs, 3.0 * xs + 1.0, None)) == pytest.approx(1.0)

    def test_sign_product(self):
        """Test that two negative axes multiply to a positive coefficient."""
        xs = np.array([[0.0, 1.0], [1.0, 3.0], [2.0, 2.0], [4.0, 0.0]])
        assert pearson(PairSeries(xs, -xs, None)) == pytest.approx(1.0)
        assert pearson(PairSeries(xs, xs * [1.0, -1.0], None)) == pytest.approx(-1.0)

    def test_worked_example(self):
        """Test a hand-computed coefficient: 6.5 / sqrt(5 * 8.75) on x, exactly 1 on y."""
        series = PairSeries.from_lists([[1, 0], [2, 1], [3, 0], [4, 1]], [[1, 0], [2, 1], [3, 0], [5, 1]])
        assert pearson(series) == pytest.approx(0.98270, abs=1e-4)
        assert pearson(series) == pytest.approx(6.5 / np.sqrt(43.75), abs=1e-12)

    def test_too_few_frames(self):
        """Test that fewer than three jointly valid frames leave the coefficient undefined."""
        xs = np.array([[0.0, 1.0], [1.0, 3.0], [2.0, 2.0]])
        with pytest.raises(UndefinedCorrelation):
            pearson(PairSeries(xs, xs, [True, True, False]))

    def test_constant_axis(self):
        """Test that a constant axis leaves the coefficient undefined."""
        xs = np.array([[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]])
        with pytest.raises(UndefinedCorrelation):
            pearson(PairSeries(xs, xs, None))

    @settings(max_examples=200, deadline=None)
    @given(
        values=st.lists(
            st.tuples(*[st.floats(-50, 50, allow_nan=False) for _ in range(4)]), min_size=3, max_size=12
        )
    )
    def test_bounds(self, values):
        """Test that the coefficient always lies in [-1, 1]."""
        array = np.array(values)
        try:
            rho = pearson(PairSeries(array[:, :2], array[:, 2:], None))
        except UndefinedCorrelation:
            return
        assert -1.0 <= rho <= 1.0

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 10.0), shift=st.floats(-5.0, 5.0))
    def test_affine_invariance(self, seed, scale, shift):
        """Test invariance under positive affine rescaling of one series."""
        rng = np.random.default_rng(seed)
        xs, ys = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
        base = pearson(PairSeries(xs, ys, None))
        assert pearson(PairSeries(scale * xs + shift, ys, None)) == pytest.approx(base, abs=1e-9)

    def test_fit_pair(self):
        """Test per-axis least squares on an exact line."""
        xs = np.array([[0.0, 1.0], [1.0, 3.0], [2.0, 2.0]])
        ys = xs * [2.0, -1.0] + [1.0, 4.0]
        a_x, b_x, a_y, b_y = fit_pair(PairSeries(xs, ys, None))
        assert (a_x, b_x, a_y, b_y) == pytest.approx((2.0, 1.0, -1.0, 4.0))

    def test_fit_pair_degenerate(self):
        """Test that a constant regressor cannot be fitted."""
        xs = np.array([[1.0, 1.0], [1.0, 2.0], [1.0, 3.0]])
        with pytest.raises(FitError):
            fit_pair(PairSeries(xs, xs, None))

    def test_series_length_mismatch(self):
        """Test that paired series must align."""
        with pytest.raises(StructuralError):
            PairSeries.from_lists([[0, 0], [1, 1]], [[0, 0]])


class TestTrain:
    """Test cases for train."""

    def test_exact_affine_selects_everything(self):
        """Test that perfectly related pairs are all selected with rows summing to one."""
        xs, ys = affine_problem(np.random.default_rng(0), 3, 4, 10)
        model = train(flows_of(ys), flows_of(xs), corners(3, 4))
        assert np.all(model.W > 0.0)
        assert np.allclose(model.W.sum(axis=1), 1.0, atol=1e-9)
        assert np.count_nonzero(model.W) == 12

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 10_000), noise=st.floats(0.0, 2.0), rho_th=st.floats(0.05, 0.95))
    def test_row_stochastic(self, seed, noise, rho_th):
        """Test that every predictable row of W sums to one."""
        rng = np.random.default_rng(seed)
        xs, ys = affine_problem(rng, 3, 5, 9)
        ys = ys + noise * rng.normal(size=ys.shape)
        try:
            model = train(flows_of(ys), flows_of(xs), corners(3, 5), rho_th)
        except TrainingError:
            return
        sums = model.W.sum(axis=1)
        assert np.allclose(sums[model.predictable], 1.0, atol=1e-9)
        assert np.all(sums[~model.predictable] == 0.0)
        assert np.all(model.W >= 0.0)

    def test_single_partner(self):
        """Test that a lone selected partner gets weight one."""
        xs, ys = affine_problem(np.random.default_rng(1), 1, 1, 6)
        model = train(flows_of(ys), flows_of(xs), corners(1, 1))
        assert model.W.tolist() == [[1.0]]

    def test_threshold_of_one_fails(self):
        """Test that the strict threshold of one is never met."""
        xs, ys = affine_problem(np.random.default_rng(2), 2, 2, 6)
        ys = ys + 0.01 * np.random.default_rng(3).normal(size=ys.shape)
        with pytest.raises(TrainingError) as exc_info:
            train(flows_of(ys), flows_of(xs), corners(2, 2), rho_th=1.0)
        assert str(exc_info.value).startswith("training failure")
        assert exc_info.value.exit_code == 4

    def test_threshold_range(self):
        """Test that rho_th must lie in (0, 1]."""
        xs, ys = affine_problem(np.random.default_rng(2), 1, 1, 6)
        with pytest.raises(ValidationError):
            train(flows_of(ys), flows_of(xs), corners(1, 1), rho_th=0.0)

    def test_too_few_frames(self):
        """Test that training needs three frames."""
        xs, ys = affine_problem(np.random.default_rng(2), 1, 1, 2)
        with pytest.raises(StructuralError):
            train(flows_of(ys), flows_of(xs), corners(1, 1))

    def test_lost_tracks_are_masked(self):
        """Test that statistics use jointly valid frames only."""
        xs, ys = affine_problem(np.random.default_rng(4), 1, 2, 8)
        valid = np.ones((8, 2), dtype=bool)
        valid[3, 1] = False
        xs[3, 1] = 1e6
        model = train(flows_of(ys), flows_of(xs, valid), corners(1, 2))
        assert np.all(model.W > 0.0)

    def test_deterministic(self):
        """Test that identical inputs give identical models."""
        xs, ys = affine_problem(np.random.default_rng(5), 2, 3, 7)
        first = train(flows_of(ys), flows_of(xs), corners(2, 3))
        second = train(flows_of(ys), flows_of(xs), corners(2, 3))
        assert np.array_equal(first.W, second.W)
        assert np.array_equal(first.L_A, second.L_A)
        assert np.array_equal(first.L_B, second.L_B)


class TestPredictPlain:
    """Test cases for predict_plain."""

    def test_identity_fits(self):
        """Test that identity fits on equal flows reproduce the flow."""
        model = hand_model([[0.5, 0.5]], np.ones((1, 2, 2)), np.zeros((1, 2, 2)))
        live = FlowSet(np.array([[2.0, -1.0], [2.0, -1.0]]), np.ones(2))
        assert predict_plain(model, live).displacements.tolist() == [[2.0, -1.0]]

    def test_single_pair(self):
        """Test direct evaluation of one pair."""
        model = hand_model([[1.0]], [[[2.0, 2.0]]], [[[1.0, 1.0]]])
        live = FlowSet(np.array([[3.0, 4.0]]), np.ones(1))
        assert predict_plain(model, live).displacements.tolist() == [[7.0, 9.0]]

    def test_weighted_pairs(self):
        """Test the weighted sum of two pair predictions."""
        model = hand_model([[0.25, 0.75]], np.zeros((1, 2, 2)), [[[4.0, 0.0], [0.0, 4.0]]])
        live = FlowSet(np.zeros((2, 2)), np.ones(2))
        assert predict_plain(model, live).displacements == pytest.approx(np.array([[1.0, 3.0]]))

    def test_lost_track_renormalizes(self):
        """Test that weights of lost live tracks are redistributed."""
        model = hand_model([[0.25, 0.75], [1.0, 0.0]], np.zeros((2, 2, 2)), [[[4.0, 0.0], [0.0, 4.0]], [[2.0, 2.0], [0.0, 0.0]]])
        live = FlowSet(np.zeros((2, 2)), np.array([False, True]))
        predicted = predict_plain(model, live)
        assert predicted.displacements[0].tolist() == [0.0, 4.0]
        assert predicted.valid.tolist() == [True, False]

    def test_all_tracks_lost(self):
        """Test that a frame without valid tracks cannot be predicted."""
        model = hand_model([[1.0]], np.ones((1, 1, 2)), np.zeros((1, 1, 2)))
        with pytest.raises(PredictionError):
            predict_plain(model, FlowSet(np.zeros((1, 2)), np.zeros(1), target_index=7))

    def test_misaligned_live_flow(self):
        """Test that the live flow must match the model."""
        model = hand_model([[1.0]], np.ones((1, 1, 2)), np.zeros((1, 1, 2)))
        with pytest.raises(StructuralError):
            predict_plain(model, FlowSet(np.zeros((2, 2)), np.ones(2)))

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 10_000), phase=st.floats(0.0, 20.0))
    def test_exact_recovery(self, seed, phase):
        """Test that noiseless affine motion is reproduced on unseen frames."""
        rng = np.random.default_rng(seed)
        n_v, n_n = 3, 4
        gain_x, gain_y = rng.uniform(0.5, 2.0, size=(n_n, 2)), rng.uniform(0.5, 2.0, size=(n_v, 2))
        off_x, off_y = rng.uniform(-1, 1, size=(n_n, 2)), rng.uniform(-1, 1, size=(n_v, 2))

        def motion(t):
            signal = np.array([np.sin(0.7 * t), np.cos(0.5 * t)])
            return signal * gain_x + off_x, signal * gain_y + off_y

        frames = [motion(t) for t in range(10)]
        model = train(
            flows_of(np.stack([f[1] for f in frames])), flows_of(np.stack([f[0] for f in frames])), corners(n_v, n_n)
        )
        live_n, live_v = motion(10.0 + phase)
        predicted = predict_plain(model, FlowSet(live_n, np.ones(n_n)))
        assert np.max(np.abs(predicted.displacements - live_v)) < 1e-9


class TestCorruption:
    """Test cases for corrupt_flows."""

    def test_fraction_and_magnitude(self):
        """Test that the requested share of valid flows moves by the magnitude per axis."""
        flow = FlowSet(np.zeros((10, 2)), np.ones(10))
        corrupted = corrupt_flows(flow, 0.3, 20.0, np.random.default_rng(0))
        moved = np.any(corrupted.displacements != 0.0, axis=1)
        assert moved.sum() == 3
        assert np.all(np.abs(corrupted.displacements[moved]) == 20.0)

    def test_invalid_entries_untouched(self):
        """Test that lost tracks stay zero."""
        valid = np.array([True, False] * 5)
        corrupted = corrupt_flows(FlowSet(np.zeros((10, 2)), valid), 1.0, 5.0, np.random.default_rng(1))
        assert np.all(corrupted.displacements[~valid] == 0.0)
        assert np.all(np.abs(corrupted.displacements[valid]) == 5.0)

    def test_fraction_range(self):
        """Test that the fraction must lie in [0, 1]."""
        with pytest.raises(ValidationError):
            corrupt_flows(FlowSet(np.zeros((2, 2)), np.ones(2)), 1.5, 1.0, np.random.default_rng(0))
