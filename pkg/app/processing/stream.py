"""
Per-session streaming consumer.

Every arriving frame is pushed into the open sweep; a frame that closes a
sweep triggers the estimator on the sweep it closed.
"""

import logging
from typing import Iterable, List, Optional

from pydantic import BaseModel, ConfigDict

from app.core.exceptions import EstimationError
from app.link.protocol import TimestampFrame
from app.link.sweep import SweepBuffer, detect_sweep_complete
from app.processing.estimator import EstimatorConfig, VolumeEstimate, process_sweep
from app.sim.phantom import TransducerArray


logger = logging.getLogger(__name__)


class SweepResult(BaseModel):
    """Estimator outcome for one completed sweep of a stream."""
    model_config = ConfigDict(frozen=True)

    index: int
    frame_start: int  # offset of the sweep's first frame in the stream
    frame_count: int
    estimate: Optional[VolumeEstimate] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.estimate is not None


class SessionProcessor:
    """
    Single consumer of one session's frame stream.

    Estimation errors are recorded on the SweepResult and do not stop the
    stream.
    """

    def __init__(self, array: TransducerArray, cfg: EstimatorConfig = EstimatorConfig()):
        self.array = array
        self.cfg = cfg
        self.buffer = SweepBuffer()
        self.results: List[SweepResult] = []
        self.frames_seen = 0
        self._sweep_start = 0

    def feed(self, frame: TimestampFrame) -> Optional[SweepResult]:
        """Push one frame; returns a result when the frame closed a sweep."""
        self.buffer, completed = detect_sweep_complete(self.buffer, frame)
        self.frames_seen += 1
        if completed is None:
            return None
        result = self._process(completed)
        self._sweep_start += len(completed)
        return result

    def feed_many(self, frames: Iterable[TimestampFrame]) -> List[SweepResult]:
        results = []
        for frame in frames:
            result = self.feed(frame)
            if result is not None:
                results.append(result)
        return results

    def close(self, expect_complete: bool = True) -> Optional[SweepResult]:
        """Flush the trailing sweep at end of session."""
        pending = len(self.buffer)
        completed = self.buffer.close(expect_complete)
        if completed is None:
            self._sweep_start += pending
            return None
        result = self._process(completed)
        self._sweep_start += len(completed)
        return result

    def _process(self, sweep: SweepBuffer) -> SweepResult:
        index = len(self.results)
        try:
            estimate = process_sweep(sweep, self.array, self.cfg)
            result = SweepResult(
                index=index, frame_start=self._sweep_start, frame_count=len(sweep), estimate=estimate
            )
        except EstimationError as exc:
            logger.warning("sweep %d: %s", index, exc)
            result = SweepResult(
                index=index, frame_start=self._sweep_start, frame_count=len(sweep),
                error=f"{type(exc).__name__}: {exc}",
            )
        self.results.append(result)
        return result
