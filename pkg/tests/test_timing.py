"""
Tests for stage timing.
"""

import time

import pytest

from vascular_mrc.evaluation.timing import TimingReport, host_info, time_pipeline


class TestTimePipeline:
    """Test cases for time_pipeline."""

    def test_noop_learn(self):
        """Test that an empty learn stage takes under a millisecond."""
        report = time_pipeline("learn", lambda: None)
        assert 0.0 <= report.learn_time < 1e-3

    def test_sleep_is_measured(self):
        """Test that a 10 ms sleep is reported as at least 10 ms."""
        report = time_pipeline("learn", lambda: time.sleep(0.01), warmup=False)
        assert 0.01 <= report.learn_time < 0.1

    def test_warmup_excluded(self):
        """Test that the slow first call is not part of the measurement."""
        calls = []

        def learn():
            if not calls:
                time.sleep(0.05)
            calls.append(1)

        report = time_pipeline("learn", learn)
        assert len(calls) == 2
        assert report.learn_time < 0.02

    def test_predict_per_frame(self):
        """Test one timing per frame plus one untimed warm-up call."""
        seen = []
        report = time_pipeline("predict", seen.append, frames=[1, 2, 3])
        assert seen == [1, 1, 2, 3]
        assert len(report.predict_times) == 3
        assert report.mean_predict == pytest.approx(sum(report.predict_times) / 3)

        seen.clear()
        time_pipeline("predict", seen.append, frames=[1, 2], warmup=False)
        assert seen == [1, 2]

    def test_unknown_stage(self):
        """Test that only learn and predict stages exist."""
        with pytest.raises(ValueError):
            time_pipeline("train", lambda: None)


class TestTimingReport:
    """Test cases for TimingReport and host_info."""

    def test_host_info(self):
        """Test the reported host fields."""
        info = host_info()
        assert {"platform", "processor", "physical_cores", "logical_cores", "max_freq_mhz", "memory_gb"} <= set(info)
        assert info["memory_gb"] > 0

    def test_merge_and_dict(self):
        """Test combining learn and predict reports."""
        learn = TimingReport(learn_time=0.5, host={"platform": "x"})
        predict = TimingReport(predict_times=[0.1, 0.3])
        merged = learn.merge(predict)
        assert merged.learn_time == 0.5
        assert merged.mean_predict == pytest.approx(0.2)
        data = merged.to_dict()
        assert data["predict_times"] == [0.1, 0.3]
        assert data["host"] == {"platform": "x"}
        assert TimingReport().mean_predict is None
