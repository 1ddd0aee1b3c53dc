"""
Planar-reflector distance scan.

Bench check of the electronics: one element faces a flat reflector in a
water tank, and the distance read back from the captured edges is compared
with the true one for transducers of several resonances, each driven at its
own frequency.
"""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.harness.runner import firing_seed
from app.processing.estimator import EstimatorConfig, cluster_bursts, tick_to_depth
from app.sim.acoustics import (
    EchoModel,
    EchoTrace,
    PulseSpec,
    TransducerResponse,
    add_noise,
    echo_amplitude,
    echo_train,
    round_trip_time,
)
from app.sim.afe import ReceiverChain, ReceiverConfig
from app.sim.phantom import TissueMedium


logger = logging.getLogger(__name__)

RESONANCES_MHZ = (1.0, 2.0, 3.0, 5.0, 8.0)
DISTANCES_MM = (20.0, 40.0, 60.0, 80.0, 100.0)
REFLECTOR_REFLECTION = 0.3


class ReflectorReading(BaseModel):
    model_config = ConfigDict(frozen=True)

    resonance_mhz: float
    distance_mm: float
    measured_mm: Optional[float] = None
    edge_count: int = 0

    @property
    def error_mm(self) -> Optional[float]:
        return None if self.measured_mm is None else self.measured_mm - self.distance_mm


def reflector_trace(
    distance_mm: float,
    pulse: PulseSpec,
    response: TransducerResponse,
    medium: TissueMedium,
    noise_snr_db: Optional[float] = None,
    seed: int = 0,
    model: EchoModel = EchoModel(),
) -> EchoTrace:
    """Received voltage of a single echo from a reflector ``distance_mm`` away."""
    n = int(math.ceil(model.record_length_us * model.sample_rate))
    times = np.arange(n) / model.sample_rate
    amplitude = echo_amplitude(distance_mm, REFLECTOR_REFLECTION, pulse, response, medium)
    signal = echo_train(times, [round_trip_time(distance_mm, medium.speed_of_sound)], [amplitude], response)
    return EchoTrace(sample_rate=model.sample_rate, samples=add_noise(signal, amplitude, noise_snr_db, seed))


def reflector_scan(
    resonances_mhz: Sequence[float] = RESONANCES_MHZ,
    distances_mm: Sequence[float] = DISTANCES_MM,
    medium: Optional[TissueMedium] = None,
    drive_amplitude: float = 30.0,
    noise_snr_db: Optional[float] = None,
    seed: int = 0,
    receiver: ReceiverConfig = ReceiverConfig(),
) -> List[ReflectorReading]:
    """
    Measure reflector distances for every (resonance, distance) pair.

    The distance is the mean of the echo's rising edges converted at the
    medium's speed of sound, without onset correction.
    """
    medium = medium or TissueMedium.water()
    chain = ReceiverChain(receiver)
    cfg = EstimatorConfig(tick_rate=receiver.tick_rate, speed_of_sound=medium.speed_of_sound)
    readings = []
    for i, f in enumerate(resonances_mhz):
        response = TransducerResponse(resonance=f)
        pulse = PulseSpec(center_frequency=f, drive_amplitude=drive_amplitude)
        for j, distance in enumerate(distances_mm):
            trace = reflector_trace(distance, pulse, response, medium, noise_snr_db, firing_seed(seed, i, j + 1))
            edges = chain.acquire(trace)
            clusters = cluster_bursts(edges, cfg.gap_threshold_us)
            measured = (
                tick_to_depth(clusters[0].mean_tick, edges.tick_rate, cfg.speed_of_sound) if clusters else None
            )
            if measured is None:
                logger.warning("%.0f MHz at %.0f mm: no echo detected", f, distance)
            readings.append(ReflectorReading(
                resonance_mhz=f, distance_mm=distance, measured_mm=measured, edge_count=len(edges.rising_edges)
            ))
    return readings
