"""
Sweep scheduling on the device side and sweep segmentation on the receiving side.

A sweep fires the four channels in ``channel_order``; the receiver knows a
sweep is over when a frame from transducer 1 follows one from transducer 4.
"""

import logging
import time
from typing import Annotated, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.link.protocol import FLAG_OVERFLOW, TimestampFrame
from app.sim.afe import EdgeTimestamps


logger = logging.getLogger(__name__)

PositiveFloat = Annotated[float, Field(gt=0, allow_inf_nan=False)]
FIRST_CHANNEL = 1
LAST_CHANNEL = 4


class SweepSchedule(BaseModel):
    """Firing cadence of the pulser multiplexer."""
    model_config = ConfigDict(frozen=True)

    pulse_period: PositiveFloat = 2.5  # s between firings of the selected channel
    channel_dwell: PositiveFloat = 10.0  # s per channel
    channel_order: Tuple[int, int, int, int] = (1, 2, 3, 4)
    notification_interval: PositiveFloat = 25.0  # ms between notifications

    @field_validator("channel_order")
    @classmethod
    def _permutation(cls, v):
        if sorted(v) != [1, 2, 3, 4]:
            raise ValueError("channel_order must be a permutation of 1..4")
        return v

    @model_validator(mode="after")
    def _dwell_covers_period(self) -> "SweepSchedule":
        if self.channel_dwell < self.pulse_period:
            raise ValueError("channel_dwell must be at least one pulse_period")
        return self

    @property
    def sweep_duration(self) -> float:
        """Seconds of simulated time one full sweep spans."""
        return len(self.channel_order) * self.channel_dwell

    @property
    def firings_per_channel(self) -> int:
        return int(self.channel_dwell // self.pulse_period)


class EmittedFrame(BaseModel):
    """A frame together with its nominal emission time (s)."""
    model_config = ConfigDict(frozen=True)

    time_s: float
    frame: TimestampFrame


def iter_sweep(
    schedule: SweepSchedule,
    edges: Mapping[int, EdgeTimestamps],
    session_id: int = 1,
    start_time_s: float = 0.0,
    time_scale: float = 0.0,
    sleep: Callable[[float], None] = time.sleep,
) -> Iterator[EmittedFrame]:
    """
    Emit one sweep's frames in channel order.

    Each channel's edges go out in tick order, one notification interval
    apart, from the start of the channel's dwell slot.

    Args:
        schedule: Firing cadence
        edges: Captured ticks per element id; missing ids send nothing
        session_id: Session tag written into every frame
        start_time_s: Nominal time of the sweep start
        time_scale: Wall-clock seconds slept per simulated second (0 runs instantly)
        sleep: Sleep function, replaceable in tests
    """
    for slot, channel in enumerate(schedule.channel_order):
        slot_start = start_time_s + slot * schedule.channel_dwell
        if time_scale > 0 and slot > 0:
            sleep(schedule.channel_dwell * time_scale)
        captured = edges.get(channel)
        if captured is None:
            continue
        flags = FLAG_OVERFLOW if captured.overflow else 0
        for k, tick in enumerate(captured.rising_edges):
            yield EmittedFrame(
                time_s=slot_start + k * schedule.notification_interval / 1000.0,
                frame=TimestampFrame(
                    session_id=session_id, transducer_id=channel, flags=flags, timestamp_ticks=tick
                ),
            )


def run_sweep(
    schedule: SweepSchedule,
    edges: Mapping[int, EdgeTimestamps],
    session_id: int = 1,
    start_time_s: float = 0.0,
    time_scale: float = 0.0,
) -> List[EmittedFrame]:
    """Ordered frame stream of one sweep (see :func:`iter_sweep`)."""
    return list(iter_sweep(schedule, edges, session_id, start_time_s, time_scale))


class SweepBuffer:
    """
    Frames of the sweep currently being received.

    Single consumer: ``push`` is called once per arriving frame. When a frame
    from transducer 1 follows one from transducer 4, the buffered frames are
    handed out as a completed sweep and the buffer restarts with the new frame.
    """

    def __init__(self, frames: Optional[Sequence[TimestampFrame]] = None, completed: bool = False):
        self.frames: List[TimestampFrame] = list(frames or [])
        self.completed = completed

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def last_transducer(self) -> Optional[int]:
        return self.frames[-1].transducer_id if self.frames else None

    def by_transducer(self) -> Dict[int, List[TimestampFrame]]:
        """Frames grouped per transducer, each group in arrival order."""
        groups: Dict[int, List[TimestampFrame]] = {}
        for frame in self.frames:
            groups.setdefault(frame.transducer_id, []).append(frame)
        return groups

    def push(self, incoming: TimestampFrame) -> Optional["SweepBuffer"]:
        """Add a frame; returns the completed sweep if this frame closed one."""
        if self.last_transducer == LAST_CHANNEL and incoming.transducer_id == FIRST_CHANNEL:
            done = SweepBuffer(self.frames, completed=True)
            self.frames = [incoming]
            return done
        self.frames.append(incoming)
        return None

    def close(self, expect_complete: bool = True) -> Optional["SweepBuffer"]:
        """
        End of session.

        A trailing buffer whose last frame came from transducer 4 counts as a
        finished sweep when the stream is known to be intact; anything else
        is an incomplete sweep and is dropped with a warning.
        """
        if not self.frames:
            return None
        frames, self.frames = self.frames, []
        if expect_complete and frames[-1].transducer_id == LAST_CHANNEL:
            return SweepBuffer(frames, completed=True)
        logger.warning("incomplete sweep of %d frames dropped at end of stream", len(frames))
        return None


def detect_sweep_complete(
    buffer: SweepBuffer, incoming: TimestampFrame
) -> Tuple[SweepBuffer, Optional[SweepBuffer]]:
    """Feed one frame; returns the updated buffer and the completed sweep, if any."""
    completed = buffer.push(incoming)
    return buffer, completed


def segment_sweeps(frames: Sequence[TimestampFrame]) -> Tuple[List[SweepBuffer], SweepBuffer]:
    """Partition a stream into completed sweeps plus the still-open remainder."""
    buffer = SweepBuffer()
    sweeps: List[SweepBuffer] = []
    for frame in frames:
        buffer, done = detect_sweep_complete(buffer, frame)
        if done is not None:
            sweeps.append(done)
    return sweeps, buffer
