"""
Receive chain: amplifier + RC low-pass, Schmitt comparator, input capture.

The chain turns an EchoTrace into the counter ticks the microcontroller
latches on each rising comparator edge.
"""

import logging
import math
from typing import Annotated, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.signal import bilinear, lfilter, lfilter_zi

from app.core.exceptions import CaptureOverflowError, ParameterError
from app.sim.acoustics import EchoTrace


logger = logging.getLogger(__name__)

PositiveFloat = Annotated[float, Field(gt=0, allow_inf_nan=False)]


class ReceiverConfig(BaseModel):
    """
    Analog front-end and timer settings.

    Default thresholds are the Schmitt levels of two 20k resistors dividing
    5 V with 60k feedback from the comparator output (see ``from_divider``).
    """
    model_config = ConfigDict(frozen=True)

    gain: PositiveFloat = 10.0
    lpf_cutoff: PositiveFloat = 5.88  # MHz
    v_supply: PositiveFloat = 5.0
    bias: PositiveFloat = 2.5  # divider midpoint the echo rides on
    threshold_rise: PositiveFloat = 2.857
    threshold_fall: PositiveFloat = 2.143
    tick_rate: PositiveFloat = 64.0  # MHz
    capture_depth: Annotated[int, Field(ge=1)] = 64

    @model_validator(mode="after")
    def _hysteresis_window(self) -> "ReceiverConfig":
        if not 0 < self.threshold_fall < self.threshold_rise < self.v_supply:
            raise ValueError("need 0 < threshold_fall < threshold_rise < v_supply")
        return self

    @classmethod
    def from_divider(
        cls,
        r_top: float = 20e3,
        r_bottom: float = 20e3,
        r_feedback: float = 60e3,
        v_supply: float = 5.0,
        **overrides,
    ) -> "ReceiverConfig":
        """
        Schmitt levels of a divider fed back from a rail-to-rail output.

        By superposition the positive pin sits at the divider's Thevenin
        voltage pulled toward the output level through ``r_feedback``.
        """
        v_th = v_supply * r_bottom / (r_top + r_bottom)
        r_th = r_top * r_bottom / (r_top + r_bottom)
        k = r_th / (r_th + r_feedback)
        rise = v_th * (1 - k) + v_supply * k
        fall = v_th * (1 - k)
        return cls(
            v_supply=v_supply, bias=v_th, threshold_rise=rise, threshold_fall=fall, **overrides
        )


class DigitalTrace(BaseModel):
    """
    Comparator output.

    ``states`` is the sampled 1-bit level; ``rising_edges_us`` holds the
    interpolated instants at which the input crossed ``threshold_rise`` while
    the output was low.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    sample_rate: PositiveFloat
    start_time: float = 0.0
    states: np.ndarray
    rising_edges_us: Tuple[float, ...] = ()

    def voltage(self, v_supply: float = 5.0) -> np.ndarray:
        return self.states.astype(float) * v_supply


class EdgeTimestamps(BaseModel):
    """Counter ticks of the rising edges captured during one firing."""
    model_config = ConfigDict(frozen=True)

    rising_edges: Tuple[int, ...] = ()
    tick_rate: PositiveFloat = 64.0
    overflow: bool = False

    @field_validator("rising_edges")
    @classmethod
    def _strictly_increasing(cls, v):
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("rising edge ticks must be strictly increasing")
        if any(t < 0 for t in v):
            raise ValueError("ticks must be non-negative")
        return v

    def times_us(self) -> List[float]:
        return [t / self.tick_rate for t in self.rising_edges]


def _lowpass_coefficients(cutoff: float, sample_rate: float) -> Tuple[np.ndarray, np.ndarray]:
    # Prewarped so the digital -3 dB point lands exactly on `cutoff`.
    warped = 2.0 * sample_rate * math.tan(math.pi * cutoff / sample_rate)
    return bilinear([1.0], [1.0 / warped, 1.0], fs=sample_rate)


def amplify_and_filter(trace: EchoTrace, cfg: ReceiverConfig) -> EchoTrace:
    """
    Op-amp gain followed by the single-pole RC low-pass.

    The filter starts in steady state with the first sample, so a constant
    input produces ``gain * input`` from the first output sample on.

    Raises:
        ParameterError: If the trace is sampled below 4x the cutoff
    """
    if trace.sample_rate < 4.0 * cfg.lpf_cutoff:
        raise ParameterError(
            f"sample rate {trace.sample_rate} MHz is below 4x the {cfg.lpf_cutoff} MHz cutoff"
        )
    b, a = _lowpass_coefficients(cfg.lpf_cutoff, trace.sample_rate)
    x = cfg.gain * trace.samples
    if x.size == 0:
        return trace.with_samples(x)
    y, _ = lfilter(b, a, x, zi=lfilter_zi(b, a) * x[0])
    return trace.with_samples(y)


def comparator(trace: EchoTrace, cfg: ReceiverConfig) -> DigitalTrace:
    """
    Schmitt-trigger comparison of ``cfg.bias + trace``.

    The output goes high when the input rises above ``threshold_rise`` and
    low again only once it drops below ``threshold_fall``; it starts low.
    """
    v = cfg.bias + trace.samples
    states = np.zeros(v.size, dtype=bool)
    edges: List[float] = []
    above = v > cfg.threshold_rise
    below = v < cfg.threshold_fall

    # Only samples outside the hysteresis band can change the state.
    high = False
    last = 0
    for i in np.flatnonzero(above | below):
        if high:
            states[last:i] = True
        if not high and above[i]:
            high = True
            edges.append(_crossing_time(trace, v, i, cfg.threshold_rise))
        elif high and below[i]:
            high = False
        last = i
    if high:
        states[last:] = True

    return DigitalTrace(
        sample_rate=trace.sample_rate,
        start_time=trace.start_time,
        states=states,
        rising_edges_us=tuple(edges),
    )


def _crossing_time(trace: EchoTrace, v: np.ndarray, i: int, level: float) -> float:
    t_i = trace.start_time + i / trace.sample_rate
    if i == 0:
        return t_i
    frac = (level - v[i - 1]) / (v[i] - v[i - 1])
    return t_i - (1.0 - frac) / trace.sample_rate


def capture_timestamps(
    digital: DigitalTrace, tick_rate: float = 64.0, capture_depth: int = 64
) -> EdgeTimestamps:
    """
    Latch the free-running counter on each rising edge.

    Edges that land on the same tick collapse into one entry.

    Raises:
        CaptureOverflowError: If more than ``capture_depth`` edges arrive
    """
    ticks = np.unique(np.floor(np.asarray(digital.rising_edges_us) * tick_rate).astype(np.int64))
    ticks = ticks[ticks >= 0]
    if ticks.size > capture_depth:
        raise CaptureOverflowError(ticks[:capture_depth].tolist(), int(ticks.size), capture_depth)
    return EdgeTimestamps(rising_edges=tuple(int(t) for t in ticks), tick_rate=tick_rate)


class ReceiverChain:
    """
    Capture session for one element firing at a time.

    Mirrors the firmware path: an overflowing capture buffer keeps its first
    ``capture_depth`` ticks and marks the firing as overflowed instead of
    failing the sweep.
    """

    def __init__(self, cfg: ReceiverConfig):
        self.cfg = cfg

    def acquire(self, trace: EchoTrace) -> EdgeTimestamps:
        """Run amplify -> comparator -> capture on one trace."""
        filtered = amplify_and_filter(trace, self.cfg)
        digital = comparator(filtered, self.cfg)
        try:
            return capture_timestamps(digital, self.cfg.tick_rate, self.cfg.capture_depth)
        except CaptureOverflowError as exc:
            logger.warning("capture overflow: %s; firing flagged", exc)
            return EdgeTimestamps(rising_edges=tuple(exc.captured), tick_rate=self.cfg.tick_rate, overflow=True)
