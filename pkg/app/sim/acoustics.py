"""
Forward acoustic model: wall depths in, sampled received voltage out.

Each wall returns a Gaussian-windowed tone burst centred on its round-trip
time. The envelope width follows the transducer's fractional bandwidth,
which makes the echo exactly ``scipy.signal.gausspulse`` with the bandwidth
read at half amplitude. Units: mm, us, MHz, V.
"""

import math
from typing import Annotated, Literal, Optional, Sequence, TextIO, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.signal import gausspulse

from app.core.exceptions import ParameterError
from app.sim.phantom import TissueMedium, WallDepths


PositiveFloat = Annotated[float, Field(gt=0, allow_inf_nan=False)]

# gausspulse measures `bw` at this level; -6.02 dB (half amplitude) makes
# sigma_f = bw * fc / (2 sqrt(2 ln 2)).
HALF_AMPLITUDE_DB = 20.0 * math.log10(0.5)
TRACE_HEADER = "# ubvm-trace/1 time_us voltage_V"


class PulseSpec(BaseModel):
    """Excitation burst sent to one element."""
    model_config = ConfigDict(frozen=True)

    center_frequency: PositiveFloat = 2.0  # MHz
    cycles: Annotated[int, Field(ge=1)] = 5
    drive_amplitude: PositiveFloat = 30.0  # V
    polarity: Literal["bipolar"] = "bipolar"

    @property
    def burst_duration_us(self) -> float:
        return self.cycles / self.center_frequency


class TransducerResponse(BaseModel):
    """Spectral model of the air-backed element."""
    model_config = ConfigDict(frozen=True)

    resonance: PositiveFloat = 2.0  # MHz
    fractional_bandwidth: Annotated[float, Field(gt=0, lt=2)] = 0.291  # -3 dB
    sensitivity: PositiveFloat = 0.03  # V/V round trip

    @property
    def sigma_f(self) -> float:
        """Spectral standard deviation (MHz)."""
        return self.fractional_bandwidth * self.resonance / (2.0 * math.sqrt(2.0 * math.log(2.0)))

    @property
    def sigma_t(self) -> float:
        """Envelope standard deviation (us)."""
        return 1.0 / (2.0 * math.pi * self.sigma_f)

    def spectral_gain(self, frequency: float) -> float:
        """Relative amplitude response at ``frequency`` (1 at resonance)."""
        return math.exp(-((frequency - self.resonance) ** 2) / (2.0 * self.sigma_f ** 2))


class EchoModel(BaseModel):
    """Sampling and reflection settings of the simulator."""
    model_config = ConfigDict(frozen=True)

    sample_rate: PositiveFloat = 40.0  # MHz
    record_length_us: PositiveFloat = 270.3  # covers 200 mm at 1480 m/s
    anterior_reflection: Annotated[float, Field(ge=0, le=1)] = 0.1
    posterior_reflection: Annotated[float, Field(ge=0, le=1)] = 0.1


class EchoTrace(BaseModel):
    """Received voltage sampled uniformly from ``start_time`` (us after firing)."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    sample_rate: PositiveFloat  # MHz
    start_time: Annotated[float, Field(allow_inf_nan=False)] = 0.0  # us
    samples: np.ndarray

    @field_validator("samples", mode="before")
    @classmethod
    def _finite(cls, v):
        arr = np.asarray(v, dtype=float)
        if arr.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        return arr

    @property
    def times_us(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "EchoTrace":
        return EchoTrace(sample_rate=self.sample_rate, start_time=self.start_time, samples=samples)


def round_trip_time(depth: float, c: float) -> float:
    """Two-way travel time (us) to a reflector ``depth`` mm away at ``c`` m/s."""
    if depth < 0 or c <= 0:
        raise ParameterError(f"need depth >= 0 and c > 0, got depth={depth}, c={c}")
    return 2.0 * depth * 1e3 / c


def path_attenuation(depth: float, f: float, medium: TissueMedium) -> float:
    """Round-trip amplitude factor through ``depth`` mm of medium at ``f`` MHz."""
    loss_db = medium.attenuation_coeff * 2.0 * (depth / 10.0) * f
    return 10.0 ** (-loss_db / 20.0)


def echo_amplitude(
    depth: float,
    reflection: float,
    pulse: PulseSpec,
    response: TransducerResponse,
    medium: TissueMedium,
) -> float:
    """Peak voltage of the echo from a reflector at ``depth``."""
    return (
        pulse.drive_amplitude
        * response.sensitivity
        * response.spectral_gain(pulse.center_frequency)
        * reflection
        * path_attenuation(depth, response.resonance, medium)
    )


def echo_train(
    times_us: np.ndarray,
    arrivals_us: Sequence[float],
    amplitudes: Sequence[float],
    response: TransducerResponse,
) -> np.ndarray:
    """Sum of Gabor echoes centred on ``arrivals_us``."""
    signal = np.zeros_like(times_us)
    for t0, amp in zip(arrivals_us, amplitudes):
        signal += amp * gausspulse(
            times_us - t0,
            fc=response.resonance,
            bw=response.fractional_bandwidth,
            bwr=HALF_AMPLITUDE_DB,
        )
    return signal


def add_noise(
    signal: np.ndarray, reference_peak: float, noise_snr_db: Optional[float], seed: Union[int, Sequence[int]]
) -> np.ndarray:
    """
    Add white Gaussian noise ``noise_snr_db`` below ``reference_peak``.

    ``None`` leaves the signal noiseless.
    """
    if noise_snr_db is None:
        return signal
    if not math.isfinite(noise_snr_db):
        raise ParameterError(f"noise_snr_db must be finite, got {noise_snr_db}")
    rms = reference_peak / 10.0 ** (noise_snr_db / 20.0)
    rng = np.random.default_rng(seed)
    return signal + rng.normal(0.0, rms, size=signal.shape)


def synthesize_trace(
    depths: Optional[WallDepths],
    pulse: PulseSpec,
    response: TransducerResponse,
    medium: TissueMedium,
    noise_snr_db: Optional[float],
    seed: Union[int, Sequence[int]],
    model: EchoModel = EchoModel(),
) -> EchoTrace:
    """
    Simulate the received voltage for one firing.

    Args:
        depths: Wall depths along the beam, or None for a miss
        pulse: Excitation burst
        response: Transducer spectral model
        medium: Propagation medium
        noise_snr_db: Anterior-echo peak to noise RMS ratio in dB; None for noiseless
        seed: Noise seed; equal seeds give bit-identical traces
        model: Sampling and reflection settings

    Returns:
        EchoTrace starting at the firing instant

    Raises:
        ParameterError: Non-finite SNR, undersampled carrier or unordered walls
    """
    if model.sample_rate < 4.0 * response.resonance:
        raise ParameterError(
            f"sample rate {model.sample_rate} MHz is below 4x the {response.resonance} MHz resonance"
        )
    if depths is not None and not depths.anterior < depths.posterior:
        raise ParameterError(f"anterior wall must precede posterior wall: {depths}")

    n = int(math.ceil(model.record_length_us * model.sample_rate))
    times = np.arange(n) / model.sample_rate
    c = medium.speed_of_sound

    if depths is None:
        # Noise is referenced to the echo a wall at the pre-wall depth would give.
        reference = echo_amplitude(medium.pre_wall_offset, model.anterior_reflection, pulse, response, medium)
        signal = np.zeros(n)
    else:
        amplitudes = [
            echo_amplitude(depths.anterior, model.anterior_reflection, pulse, response, medium),
            echo_amplitude(depths.posterior, model.posterior_reflection, pulse, response, medium),
        ]
        arrivals = [round_trip_time(depths.anterior, c), round_trip_time(depths.posterior, c)]
        reference = amplitudes[0]
        signal = echo_train(times, arrivals, amplitudes, response)

    samples = add_noise(signal, reference, noise_snr_db, seed)
    return EchoTrace(sample_rate=model.sample_rate, start_time=0.0, samples=samples)


def format_trace(trace: EchoTrace, stream: TextIO) -> None:
    """Write ``time_us voltage_V`` rows under a versioned header line."""
    stream.write(TRACE_HEADER + "\n")
    for t, v in zip(trace.times_us, trace.samples):
        stream.write(f"{t:.6f} {v:.9e}\n")


def write_trace(trace: EchoTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        format_trace(trace, f)
