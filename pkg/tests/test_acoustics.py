"""
Tests for the forward acoustic model.
Run with: pytest tests/test_acoustics.py -v
"""

import io
import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.signal import hilbert

from app.core.exceptions import ParameterError
from app.sim.acoustics import (
    TRACE_HEADER,
    EchoModel,
    EchoTrace,
    PulseSpec,
    TransducerResponse,
    add_noise,
    echo_amplitude,
    format_trace,
    path_attenuation,
    round_trip_time,
    synthesize_trace,
)
from app.sim.phantom import TissueMedium, WallDepths


def envelope_peak_times(trace: EchoTrace, split_us: float):
    env = np.abs(hilbert(trace.samples))
    t = trace.times_us
    early, late = t < split_us, t >= split_us
    return t[early][np.argmax(env[early])], t[late][np.argmax(env[late])]


class TestRoundTripTime:
    """Test time-of-flight conversion."""

    def test_fifty_mm(self):
        assert round_trip_time(50.0, 1480.0) == pytest.approx(67.568, abs=1e-3)

    def test_zero_depth(self):
        assert round_trip_time(0.0, 1480.0) == 0.0

    def test_hundred_ten_mm(self):
        assert round_trip_time(110.0, 1480.0) == pytest.approx(148.65, abs=1e-2)

    def test_negative_depth_rejected(self):
        with pytest.raises(ParameterError):
            round_trip_time(-1.0, 1480.0)


class TestPathAttenuation:
    """Test round-trip attenuation."""

    def test_lossless(self):
        assert path_attenuation(80.0, 2.0, TissueMedium(attenuation_coeff=0.0)) == 1.0

    def test_six_db(self):
        assert path_attenuation(50.0, 2.0, TissueMedium()) == pytest.approx(10 ** (-6 / 20), rel=1e-12)
        assert path_attenuation(50.0, 2.0, TissueMedium()) == pytest.approx(0.501, abs=1e-3)

    def test_doubling_depth_squares_factor(self):
        medium = TissueMedium(attenuation_coeff=0.45)
        single = path_attenuation(37.0, 2.0, medium)
        assert path_attenuation(74.0, 2.0, medium) == pytest.approx(single ** 2, rel=1e-12)


class TestTransducerResponse:
    """Test the spectral model."""

    def test_sigma_from_bandwidth(self):
        response = TransducerResponse()
        assert response.sigma_f == pytest.approx(0.291 * 2.0 / (2 * math.sqrt(2 * math.log(2))))
        assert response.sigma_t == pytest.approx(1 / (2 * math.pi * response.sigma_f))

    def test_off_resonance_drive_is_weaker(self):
        response, medium = TransducerResponse(), TissueMedium()
        on = echo_amplitude(40.0, 0.1, PulseSpec(center_frequency=2.0), response, medium)
        off = echo_amplitude(40.0, 0.1, PulseSpec(center_frequency=2.5), response, medium)
        assert off < on
        assert off / on == pytest.approx(response.spectral_gain(2.5))

    @pytest.mark.parametrize("fbw", [0.0, 2.0])
    def test_bandwidth_bounds(self, fbw):
        with pytest.raises(ValidationError):
            TransducerResponse(fractional_bandwidth=fbw)

    def test_zero_cycles_rejected(self):
        with pytest.raises(ValidationError):
            PulseSpec(cycles=0)


class TestSynthesizeTrace:
    """Test trace synthesis."""

    def test_envelope_peaks_at_round_trip_times(self):
        """Walls at 20 and 100 mm peak at 27.03 and 135.14 us within one sample."""
        trace = synthesize_trace(WallDepths(20.0, 100.0), PulseSpec(), TransducerResponse(), TissueMedium(), None, 0)
        first, second = envelope_peak_times(trace, 80.0)
        period = 1.0 / trace.sample_rate
        assert abs(first - 27.03) <= period
        assert abs(second - 135.14) <= period

    def test_posterior_weaker_than_anterior(self):
        trace = synthesize_trace(WallDepths(30.0, 90.0), PulseSpec(), TransducerResponse(), TissueMedium(), None, 0)
        split = round_trip_time(60.0, 1480.0)
        early = np.max(np.abs(trace.samples[trace.times_us < split]))
        late = np.max(np.abs(trace.samples[trace.times_us >= split]))
        assert late < early

    def test_miss_is_pure_noise(self):
        """A miss produces only noise: zero without it, zero-mean Gaussian with it."""
        silent = synthesize_trace(None, PulseSpec(), TransducerResponse(), TissueMedium(), None, 0)
        assert not np.any(silent.samples)
        noisy = synthesize_trace(None, PulseSpec(), TransducerResponse(), TissueMedium(), 20.0, 1)
        assert abs(np.mean(noisy.samples)) < 5 * np.std(noisy.samples) / math.sqrt(noisy.samples.size)

    def test_same_seed_bit_identical(self):
        args = (WallDepths(25.0, 80.0), PulseSpec(), TransducerResponse(), TissueMedium(), 20.0)
        a = synthesize_trace(*args, seed=42)
        b = synthesize_trace(*args, seed=42)
        c = synthesize_trace(*args, seed=43)
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)

    @pytest.mark.parametrize("snr", [float("nan"), float("inf")])
    def test_non_finite_snr_rejected(self, snr):
        with pytest.raises(ParameterError):
            synthesize_trace(WallDepths(20.0, 100.0), PulseSpec(), TransducerResponse(), TissueMedium(), snr, 0)

    def test_unordered_walls_rejected(self):
        with pytest.raises(ParameterError):
            synthesize_trace(WallDepths(80.0, 20.0), PulseSpec(), TransducerResponse(), TissueMedium(), None, 0)

    def test_undersampled_rejected(self):
        with pytest.raises(ParameterError):
            synthesize_trace(
                WallDepths(20.0, 100.0), PulseSpec(), TransducerResponse(), TissueMedium(), None, 0,
                model=EchoModel(sample_rate=6.0),
            )

    def test_record_covers_200_mm(self):
        trace = synthesize_trace(WallDepths(20.0, 100.0), PulseSpec(), TransducerResponse(), TissueMedium(), None, 0)
        assert trace.times_us[-1] >= round_trip_time(200.0, 1480.0) - 1.0 / trace.sample_rate

    @pytest.mark.parametrize("snr_db", [10.0, 20.0, 30.0])
    def test_measured_snr(self, snr_db):
        """Noise RMS sits snr_db below the reference peak within 1 dB over 1e5 samples."""
        signal = np.zeros(100_000)
        noisy = add_noise(signal, 0.5, snr_db, seed=9)
        measured = 20 * math.log10(0.5 / np.sqrt(np.mean(noisy ** 2)))
        assert measured == pytest.approx(snr_db, abs=1.0)

    def test_non_finite_samples_rejected(self):
        with pytest.raises(ValidationError):
            EchoTrace(sample_rate=40.0, samples=np.array([0.0, np.nan]))


class TestTraceExport:
    """Test the text export format."""

    def test_header_and_columns(self):
        trace = EchoTrace(sample_rate=40.0, samples=np.array([0.0, 0.25, -0.5]))
        buf = io.StringIO()
        format_trace(trace, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == TRACE_HEADER
        assert len(lines) == 4
        t, v = (float(x) for x in lines[2].split())
        assert t == pytest.approx(0.025)
        assert v == pytest.approx(0.25)
