"""
Wall-clock timing of the learn and predict stages.

The first invocation of a stage is a warm-up and is excluded from the
report. Timings use ``time.perf_counter``.
"""

import logging
import platform
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Literal, Optional

import psutil

logger = logging.getLogger(__name__)

Stage = Literal["learn", "predict"]


def host_info() -> Dict[str, Any]:
    """CPU and memory description of the machine running the timings."""
    freq = psutil.cpu_freq()
    return {
        "platform": platform.platform(),
        "processor": platform.processor() or platform.machine(),
        "physical_cores": psutil.cpu_count(logical=False),
        "logical_cores": psutil.cpu_count(logical=True),
        "max_freq_mhz": round(freq.max, 1) if freq and freq.max else None,
        "memory_gb": round(psutil.virtual_memory().total / 1024 ** 3, 2),
    }


@dataclass
class TimingReport:
    """Measured learn time and per-frame predict times, in seconds."""

    learn_time: Optional[float] = None
    predict_times: List[float] = field(default_factory=list)
    host: Dict[str, Any] = field(default_factory=dict)

    @property
    def mean_predict(self) -> Optional[float]:
        if not self.predict_times:
            return None
        return sum(self.predict_times) / len(self.predict_times)

    def merge(self, other: "TimingReport") -> "TimingReport":
        """Combine a learn report and a predict report."""
        return TimingReport(
            learn_time=other.learn_time if other.learn_time is not None else self.learn_time,
            predict_times=self.predict_times + other.predict_times,
            host=self.host or other.host,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "learn_time": self.learn_time,
            "predict_times": list(self.predict_times),
            "mean_predict": self.mean_predict,
            "host": dict(self.host),
        }


def _timed(runnable: Callable, *args) -> float:
    start = time.perf_counter()
    runnable(*args)
    return time.perf_counter() - start


def time_pipeline(
    stage: Stage,
    runnable: Callable[..., Any],
    frames: Optional[Iterable[Any]] = None,
    warmup: bool = True,
) -> TimingReport:
    """Time a learn callable once, or a predict callable once per frame.

    Args:
        stage: ``"learn"`` or ``"predict"``
        runnable: Zero-argument callable for learn; one-argument (frame) callable for predict
        frames: Inputs passed to the predict callable, one timed call each
        warmup: Run one untimed call first (with the first frame for predict)

    Returns:
        TimingReport with the host description attached
    """
    report = TimingReport(host=host_info())
    if stage == "learn":
        if warmup:
            runnable()
        report.learn_time = _timed(runnable)
        logger.info(f"Learn stage took {report.learn_time * 1000.0:.1f} ms")
        return report

    if stage != "predict":
        raise ValueError(f"stage must be 'learn' or 'predict', got {stage!r}")
    items = list(frames) if frames is not None else [None]
    call = (lambda item: runnable()) if frames is None else runnable
    if warmup and items:
        call(items[0])
    report.predict_times = [_timed(call, item) for item in items]
    if report.predict_times:
        logger.info(
            f"Predict stage: {len(report.predict_times)} frames, mean {report.mean_predict * 1000.0:.2f} ms"
        )
    return report
