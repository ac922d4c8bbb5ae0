"""
Tests for model files.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vascular_mrc.regression.gpr import gpr_predict, train_ensemble
from vascular_mrc.regression.mrc import MrcModel, train
from vascular_mrc.utils.exceptions import ModelFileError
from vascular_mrc.utils.serialization import load_model, mrc_from_bytes, mrc_to_bytes, save_model

from .test_mrc import affine_problem, corners, flows_of


def random_model(seed: int, n_v: int, n_n: int) -> MrcModel:
    rng = np.random.default_rng(seed)
    W = rng.uniform(0.0, 1.0, size=(n_v, n_n))
    W /= W.sum(axis=1, keepdims=True)
    return MrcModel(
        W=W,
        L_A=rng.normal(size=(n_v, n_n, 2)),
        L_B=rng.normal(size=(n_v, n_n, 2)),
        rho_th=float(rng.uniform(0.1, 1.0)),
        corners=corners(n_v, n_n),
    )


def assert_same_mrc(a: MrcModel, b: MrcModel):
    assert a.rho_th == b.rho_th
    for name in ("W", "L_A", "L_B"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert np.array_equal(a.corners.vascular, b.corners.vascular)
    assert np.array_equal(a.corners.non_vascular, b.corners.non_vascular)


class TestMrcFiles:
    """Test cases for MRC1 files."""

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 10_000), n_v=st.integers(1, 6), n_n=st.integers(1, 6))
    def test_bytes_round_trip(self, seed, n_v, n_n):
        """Test that serialized models load back bit-exactly."""
        model = random_model(seed, n_v, n_n)
        assert_same_mrc(model, mrc_from_bytes(mrc_to_bytes(model)))

    def test_file_round_trip(self, tmp_path):
        """Test saving and loading a trained model."""
        xs, ys = affine_problem(np.random.default_rng(0), 2, 3, 6)
        model = train(flows_of(ys), flows_of(xs), corners(2, 3), 0.5)
        path = tmp_path / "model.mrc"
        save_model(model, path)
        assert path.read_bytes()[:4] == b"MRC1"
        assert_same_mrc(model, load_model(path))

    def test_truncated(self, tmp_path):
        """Test that a truncated file is rejected."""
        path = tmp_path / "short.mrc"
        path.write_bytes(mrc_to_bytes(random_model(1, 2, 2))[:-3])
        with pytest.raises(ModelFileError, match="truncated"):
            load_model(path)

    def test_trailing_bytes(self, tmp_path):
        """Test that extra bytes after the model are rejected."""
        path = tmp_path / "long.mrc"
        path.write_bytes(mrc_to_bytes(random_model(1, 2, 2)) + b"\x00")
        with pytest.raises(ModelFileError, match="trailing"):
            load_model(path)

    def test_unknown_magic(self, tmp_path):
        """Test that files without a known magic are rejected."""
        path = tmp_path / "other.bin"
        path.write_bytes(b"XYZ1" + bytes(32))
        with pytest.raises(ModelFileError, match="Unknown model file format"):
            load_model(path)

    def test_missing_file(self, tmp_path):
        """Test that a missing file raises a data error."""
        with pytest.raises(ModelFileError) as excinfo:
            load_model(tmp_path / "absent.mrc")
        assert excinfo.value.exit_code == 3


class TestGprFiles:
    """Test cases for GPR1 files."""

    def test_round_trip(self, tmp_path):
        """Test that a reloaded ensemble has the same parameters and predictions."""
        xs, ys = affine_problem(np.random.default_rng(2), 1, 2, 6)
        valid = np.ones((6, 2), dtype=bool)
        valid[2:, 1] = False
        ensemble = train_ensemble(flows_of(ys), flows_of(xs, valid), corners(1, 2), kernel="squared", vbar_th=0.5)
        path = tmp_path / "model.gpr"
        save_model(ensemble, path)
        assert path.read_bytes()[:4] == b"GPR1"

        loaded = load_model(path)
        assert loaded.kernel == "squared"
        assert loaded.v_threshold == 0.5
        assert loaded.sigma_n == ensemble.sigma_n
        assert np.array_equal(loaded.trained, ensemble.trained)
        for before, after in zip(np.ravel(ensemble.models), np.ravel(loaded.models)):
            if before is None:
                assert after is None
                continue
            assert (before.c, before.eta) == (after.c, after.eta)
            assert np.array_equal(before.train_x, after.train_x)
            assert np.array_equal(gpr_predict(before, 0.3)[0], gpr_predict(after, 0.3)[0])

    def test_truncated(self, tmp_path):
        """Test that a truncated ensemble file is rejected."""
        xs, ys = affine_problem(np.random.default_rng(3), 1, 1, 5)
        path = tmp_path / "model.gpr"
        save_model(train_ensemble(flows_of(ys), flows_of(xs), corners(1, 1), vbar_th=1.0), path)
        path.write_bytes(path.read_bytes()[:40])
        with pytest.raises(ModelFileError):
            load_model(path)
