"""
Tests for sweep processing and the per-session stream consumer.
Run with: pytest tests/test_estimator.py -v
"""

import math

import pytest
from pydantic import ValidationError

from app.core.exceptions import InsufficientPointsError, ParameterError
from app.link.protocol import TimestampFrame
from app.link.sweep import SweepBuffer, SweepSchedule, run_sweep
from app.processing.estimator import (
    EchoCluster,
    EstimatorConfig,
    Quality,
    VolumeEstimate,
    Wall,
    build_points,
    clinical_ellipsoid_volume,
    cluster_bursts,
    gate_echo_count,
    process_sweep,
    sweep_clusters,
    tick_to_depth,
)
from app.processing.stream import SessionProcessor
from app.sim.acoustics import PulseSpec, TransducerResponse, synthesize_trace
from app.sim.afe import EdgeTimestamps, ReceiverChain, ReceiverConfig
from app.sim.phantom import BladderPhantom, TissueMedium, TransducerArray, wall_intersections


ARRAY = TransducerArray.default_grid()
ABDOMINAL = TissueMedium.abdominal()


def capture(phantom: BladderPhantom, drive: float = 60.0, medium: TissueMedium = ABDOMINAL):
    """Noiseless edge capture of every element for one phantom."""
    depths = wall_intersections(ARRAY, phantom, medium)
    chain = ReceiverChain(ReceiverConfig())
    pulse = PulseSpec(drive_amplitude=drive)
    return {
        tid: chain.acquire(synthesize_trace(d, pulse, TransducerResponse(), medium, None, tid))
        for tid, d in depths.items()
    }


def frames_of(edges) -> list:
    return [e.frame for e in run_sweep(SweepSchedule(), edges)]


def frame(transducer_id: int, ticks: int, flags: int = 0) -> TimestampFrame:
    return TimestampFrame(session_id=1, transducer_id=transducer_id, flags=flags, timestamp_ticks=ticks)


def cluster(transducer_id: int = 1, tick: float = 4404.0, wall: Wall = Wall.ANTERIOR) -> EchoCluster:
    members = (math.floor(tick), math.ceil(tick))
    return EchoCluster(transducer_id=transducer_id, wall=wall, member_ticks=members, mean_tick=tick)


class TestClusterBursts:
    """Test burst grouping."""

    def test_two_bursts(self):
        """Ticks at 100 MHz split into anterior 54.55 us and posterior 135.35 us."""
        ticks = EdgeTimestamps(rising_edges=(5405, 5455, 5505, 13510, 13560), tick_rate=100.0)
        clusters = cluster_bursts(ticks)
        assert [c.wall for c in clusters] == [Wall.ANTERIOR, Wall.POSTERIOR]
        assert clusters[0].mean_tick / 100.0 == pytest.approx(54.55)
        assert clusters[1].mean_tick / 100.0 == pytest.approx(135.35)
        assert clusters[0].member_ticks == (5405, 5455, 5505)

    def test_empty(self):
        assert cluster_bursts(EdgeTimestamps()) == []

    def test_single_burst(self):
        clusters = cluster_bursts(EdgeTimestamps(rising_edges=(1000, 1100, 1200)))
        assert len(clusters) == 1
        assert clusters[0].wall == Wall.ANTERIOR
        assert clusters[0].mean_tick == 1100.0

    def test_extra_bursts_discarded(self, caplog):
        clusters = cluster_bursts(EdgeTimestamps(rising_edges=(100, 110, 1000, 1010, 5000)), transducer_id=3)
        assert len(clusters) == 2
        assert all(c.transducer_id == 3 for c in clusters)
        assert "discarded 1 extra echo bursts" in caplog.text

    def test_gap_exactly_threshold_splits(self):
        """A gap of exactly the threshold starts a new burst."""
        clusters = cluster_bursts(EdgeTimestamps(rising_edges=(0, 320)), gap_threshold_us=5.0)
        assert len(clusters) == 2

    def test_mean_outside_members_rejected(self):
        with pytest.raises(ValidationError):
            EchoCluster(transducer_id=1, wall=Wall.ANTERIOR, member_ticks=(10, 20), mean_tick=25.0)


class TestGateAndConversion:
    """Test the echo-count gate and tick conversion."""

    @pytest.mark.parametrize("count,quality", [(8, Quality.OK), (5, Quality.OK), (4, Quality.LOW_ECHO_ALERT)])
    def test_gate(self, count, quality):
        assert gate_echo_count([cluster() for _ in range(count)]) == quality

    @pytest.mark.parametrize("tick,depth", [(4324, 50.0), (0, 0.0), (9513, 110.0)])
    def test_tick_to_depth(self, tick, depth):
        assert tick_to_depth(tick, 64.0) == pytest.approx(depth, abs=0.02)

    def test_bad_tick_rate(self):
        with pytest.raises(ParameterError):
            tick_to_depth(100, 0.0)

    def test_build_points_on_beam(self):
        """A cluster lands on its element's beam after the onset shift."""
        tick = (2 * 50.0 / 1.48 + 1.25) * 64.0
        (point,) = build_points([cluster(2, tick)], ARRAY)
        assert (point.x, point.y) == (7.5, 7.5)
        assert point.z == pytest.approx(50.0, abs=1e-9)

    def test_build_points_drops_non_positive_depth(self, caplog):
        points = build_points([cluster(1, 40.0), cluster(1, 4404.0, Wall.POSTERIOR)], ARRAY)
        assert len(points) == 1
        assert "non-positive depth" in caplog.text

    def test_onset_shift_is_configurable(self):
        tick = 2 * 50.0 / 1.48 * 64.0
        (point,) = build_points([cluster(1, tick)], ARRAY, EstimatorConfig(onset_correction_us=0.0))
        assert point.z == pytest.approx(50.0, abs=1e-9)


class TestClinicalVolume:
    """Test the clinical ellipsoid formula."""

    def test_ten_cm_cube(self):
        assert clinical_ellipsoid_volume(10.0, 10.0, 10.0) == pytest.approx(520.0)

    def test_sphere_ratio(self):
        d = 7.8
        ratio = clinical_ellipsoid_volume(d, d, d) / (math.pi / 6 * d ** 3)
        assert ratio == pytest.approx(0.993, abs=0.001)

    def test_zero_diameter(self):
        with pytest.raises(ParameterError):
            clinical_ellipsoid_volume(0.0, 5.0, 5.0)


class TestProcessSweep:
    """Test the full per-sweep pipeline."""

    def test_noiseless_sphere(self):
        phantom = BladderPhantom.anchored(250.0, ABDOMINAL)
        estimate = process_sweep(SweepBuffer(frames_of(capture(phantom))), ARRAY)
        assert estimate.quality == Quality.OK
        assert estimate.point_count == 8
        assert estimate.volume_ml == pytest.approx(250.0, rel=0.02)
        assert estimate.volume_ml == round(estimate.volume_ml, 1)
        assert estimate.rms_residual_mm < 1.0

    def test_one_silent_transducer(self):
        phantom = BladderPhantom.anchored(250.0, ABDOMINAL)
        edges = capture(phantom)
        edges[2] = EdgeTimestamps()
        estimate = process_sweep(SweepBuffer(frames_of(edges)), ARRAY)
        assert estimate.point_count == 6
        assert estimate.volume_ml == pytest.approx(250.0, rel=0.05)

    def test_all_overflowed(self, caplog):
        frames = [frame(t, 1000 * t + k, flags=1) for t in (1, 2, 3, 4) for k in (0, 3000)]
        with pytest.raises(InsufficientPointsError):
            process_sweep(SweepBuffer(frames), ARRAY)
        assert "masked 8 overflow-flagged frames" in caplog.text

    def test_overflowed_frames_masked(self):
        phantom = BladderPhantom.anchored(250.0, ABDOMINAL)
        frames = frames_of(capture(phantom)) + [frame(4, 12000, flags=1)]
        assert len(sweep_clusters(SweepBuffer(frames))) == 8

    def test_three_echoes(self):
        frames = [frame(1, 2000), frame(1, 8000), frame(2, 2100)]
        with pytest.raises(InsufficientPointsError):
            process_sweep(SweepBuffer(frames), ARRAY)

    def test_four_echoes_alert(self, caplog):
        frames = [frame(1, 2000), frame(1, 2010), frame(1, 8000), frame(2, 2100), frame(2, 8100)]
        estimate = process_sweep(SweepBuffer(frames), ARRAY)
        assert estimate.quality == Quality.LOW_ECHO_ALERT
        assert estimate.volume_ml is None
        assert estimate.point_count == 4
        assert "reposition the transducers" in caplog.text

    def test_duplicate_ticks_collapse(self):
        frames = [frame(1, 2000), frame(1, 2000), frame(1, 8000)]
        assert [c.member_ticks for c in sweep_clusters(SweepBuffer(frames))] == [(2000,), (8000,)]

    def test_filling_is_monotonic(self):
        volumes = [
            process_sweep(SweepBuffer(frames_of(capture(BladderPhantom.anchored(v, ABDOMINAL)))), ARRAY).volume_ml
            for v in (100.0, 200.0, 300.0, 400.0)
        ]
        assert all(b > a for a, b in zip(volumes, volumes[1:]))

    def test_ok_estimate_needs_volume(self):
        with pytest.raises(ValidationError):
            VolumeEstimate(point_count=8, quality=Quality.OK)


class TestSessionProcessor:
    """Test streaming consumption of a session."""

    def test_two_sweeps(self):
        sweep = frames_of(capture(BladderPhantom.anchored(250.0, ABDOMINAL)))
        processor = SessionProcessor(ARRAY)
        first = processor.feed_many(sweep + sweep)
        assert len(first) == 1
        assert first[0].frame_start == 0
        last = processor.close()
        assert last.frame_start == len(sweep)
        assert [r.index for r in processor.results] == [0, 1]
        assert all(r.ok for r in processor.results)
        assert processor.results[0].estimate == processor.results[1].estimate
        assert processor.frames_seen == 2 * len(sweep)

    def test_truncated_tail_dropped(self, caplog):
        sweep = frames_of(capture(BladderPhantom.anchored(250.0, ABDOMINAL)))
        processor = SessionProcessor(ARRAY)
        processor.feed_many(sweep + sweep[:-1])
        assert processor.close(expect_complete=False) is None
        assert len(processor.results) == 1
        assert "incomplete sweep" in caplog.text

    def test_error_recorded_and_stream_continues(self):
        good = frames_of(capture(BladderPhantom.anchored(250.0, ABDOMINAL)))
        bad = [frame(1, 2000), frame(4, 8000)]
        processor = SessionProcessor(ARRAY)
        processor.feed_many(bad + good)
        processor.close()
        assert len(processor.results) == 2
        assert processor.results[0].error.startswith("InsufficientPointsError")
        assert not processor.results[0].ok
        assert processor.results[1].ok
        assert processor.results[1].frame_start == 2
