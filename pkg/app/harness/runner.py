"""
Scenario runner and session logs.

run_scenario wires phantom -> acoustics -> receiver -> link -> estimator for
every sample time of a scenario and logs the raw frame stream together with
the per-sweep estimates and the ground truth. replay pushes the stored
frames through a fresh estimator and checks that it reproduces the log.

On disk a session is a directory holding ``session.json`` (scenario
snapshot, records, frame count) and ``frames.bin`` (frame log).
"""

import json
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.exceptions import IntegrityError, MonitorError, ScenarioError
from app.harness.scenarios import Scenario
from app.link.protocol import LOG_HEADER, encode_stream, iter_frames, split_frame_log
from app.link.sweep import run_sweep
from app.processing.estimator import VolumeEstimate
from app.processing.stream import SessionProcessor, SweepResult
from app.sim.acoustics import EchoTrace, synthesize_trace
from app.sim.afe import EdgeTimestamps, ReceiverChain
from app.sim.phantom import wall_intersections


logger = logging.getLogger(__name__)

SESSION_FILE = "session.json"
FRAMES_FILE = "frames.bin"
NO_ECHOES = "InsufficientPointsError: no echoes received"
NO_BOUNDARY = "IncompleteSweep: no sweep boundary after this sample"
NO_DIAMETERS = (0.0, 0.0, 0.0)

TraceSink = Callable[[int, int, EchoTrace], None]


class SweepRecord(BaseModel):
    """One sample of a session: ground truth plus what the estimator made of it."""
    model_config = ConfigDict(frozen=True)

    index: int
    sample_time_min: float
    time_s: float
    truth_ml: float
    diameters_cm: Tuple[float, float, float]
    frame_start: int
    frame_count: int
    sweep_index: Optional[int] = None
    estimate: Optional[VolumeEstimate] = None
    error: Optional[str] = None


class SessionLog(BaseModel):
    """Everything needed to reproduce and audit one scenario run."""
    model_config = ConfigDict(frozen=True)

    session_id: str
    scenario: Scenario
    records: List[SweepRecord] = Field(default_factory=list)
    frame_count: int = 0
    frames: bytes = Field(default=b"", exclude=True, repr=False)

    @property
    def estimates(self) -> List[Optional[VolumeEstimate]]:
        return [r.estimate for r in self.records]


def firing_seed(seed: int, sample_index: int, transducer_id: int) -> int:
    """Noise seed of one firing, derived from the scenario seed."""
    return int(np.random.SeedSequence([seed, sample_index, transducer_id]).generate_state(1)[0])


def acquire_sweep(
    scenario: Scenario, sample_index: int, trace_sink: Optional[TraceSink] = None
) -> Dict[int, EdgeTimestamps]:
    """Fire every element once at one sample time and capture its edges; an empty bladder gives none."""
    phantom = scenario.phantom_for(sample_index)
    if phantom is None:
        return {}
    depths = wall_intersections(scenario.array, phantom, scenario.medium)
    chain = ReceiverChain(scenario.receiver)
    edges: Dict[int, EdgeTimestamps] = {}
    for transducer_id in sorted(depths):
        trace = synthesize_trace(
            depths[transducer_id],
            scenario.pulse,
            scenario.response,
            scenario.medium,
            scenario.noise_snr_db,
            firing_seed(scenario.seed, sample_index, transducer_id),
            scenario.echo_model,
        )
        if trace_sink is not None:
            trace_sink(sample_index, transducer_id, trace)
        edges[transducer_id] = chain.acquire(trace)
    return edges


def run_scenario(scenario: Scenario, trace_sink: Optional[TraceSink] = None) -> SessionLog:
    """
    Run every sample of a scenario and log the session.

    Estimation and acquisition failures are stored on the affected record;
    the run goes on.

    Args:
        scenario: Scenario to run
        trace_sink: Optional callback receiving (sample index, transducer id, trace)

    Returns:
        SessionLog; equal scenarios give equal logs
    """
    logger.info("running scenario %s (seed %d)", scenario.name, scenario.seed)
    frames = []
    spans: List[Tuple[float, float, Tuple[float, float, float], int, int, Optional[str]]] = []

    for k, t_min in enumerate(scenario.sample_times_min):
        truth, diameters, edges, failure = 0.0, NO_DIAMETERS, {}, None
        try:
            truth = scenario.truth_ml(k)
            phantom = scenario.phantom_for(k)
            if phantom is not None:
                diameters = phantom.bounding_diameters_cm()
            edges = acquire_sweep(scenario, k, trace_sink)
        except MonitorError as exc:
            failure = f"{type(exc).__name__}: {exc}"
        emitted = run_sweep(
            scenario.schedule, edges, scenario.session_tag, start_time_s=t_min * 60.0
        )
        spans.append((t_min, truth, diameters, len(frames), len(emitted), failure))
        frames.extend(e.frame for e in emitted)

    processor = SessionProcessor(scenario.array, scenario.estimator)
    processor.feed_many(frames)
    processor.close(expect_complete=True)
    by_start = {r.frame_start: r for r in processor.results}

    records = []
    for k, (t_min, truth, diameters, start, count, failure) in enumerate(spans):
        result = by_start.get(start) if count else None
        if failure is not None:
            error = failure
        elif count == 0:
            error = NO_ECHOES
        elif result is None:
            error = NO_BOUNDARY
        else:
            error = result.error
        if error is not None:
            logger.warning("sample %d (t=%.1f min): %s", k, t_min, error)
        records.append(SweepRecord(
            index=k,
            sample_time_min=t_min,
            time_s=t_min * 60.0,
            truth_ml=truth,
            diameters_cm=diameters,
            frame_start=start,
            frame_count=count,
            sweep_index=result.index if result is not None else None,
            estimate=result.estimate if result is not None else None,
            error=error,
        ))

    log = SessionLog(
        session_id=f"{scenario.name}-{scenario.fingerprint()}",
        scenario=scenario,
        records=records,
        frame_count=len(frames),
        frames=encode_stream(frames),
    )
    logger.info(
        "scenario %s done: %d samples, %d frames, %d estimates",
        scenario.name, len(records), len(frames), sum(r.estimate is not None for r in records),
    )
    return log


def replay(log: SessionLog) -> List[SweepResult]:
    """
    Re-run the estimator over the stored frame stream.

    A stream shorter than the logged frame count is replayed partially: the
    open trailing sweep is dropped with a warning and only the sweeps that
    did complete are checked.

    Raises:
        FramingError, ProtocolError: The stored stream does not decode
        IntegrityError: A frame carries another session id, or a replayed
            sweep differs from the logged one
    """
    frames = list(iter_frames(log.frames, strict=False))
    tag = log.scenario.session_tag
    for offset, frame in enumerate(frames):
        if frame.session_id != tag:
            raise IntegrityError(f"frame {offset} carries session id {frame.session_id}, log is session {tag}")
    complete = len(frames) == log.frame_count
    if not complete:
        logger.warning("stream holds %d of %d logged frames; replaying partially", len(frames), log.frame_count)

    processor = SessionProcessor(log.scenario.array, log.scenario.estimator)
    processor.feed_many(frames)
    processor.close(expect_complete=complete)
    results = processor.results

    logged = {r.sweep_index: r for r in log.records if r.sweep_index is not None}
    if complete and len(results) != len(logged):
        raise IntegrityError(f"replay produced {len(results)} sweeps, log holds {len(logged)}")
    for result in results:
        record = logged.get(result.index)
        if record is None:
            raise IntegrityError(f"replayed sweep {result.index} is not in the log")
        if (result.frame_start, result.estimate, result.error) != (record.frame_start, record.estimate, record.error):
            raise IntegrityError(
                f"sweep {result.index} (sample {record.index}) differs from the log: "
                f"{result.estimate or result.error} != {record.estimate or record.error}"
            )
    return results


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def session_to_json(log: SessionLog) -> str:
    return json.dumps(log.model_dump(mode="json"), indent=2)


def frames_to_bytes(log: SessionLog) -> bytes:
    """Frame log file content (header line plus frames)."""
    return LOG_HEADER + log.frames


def session_from_parts(document: str, frame_log: bytes) -> SessionLog:
    """Rebuild a SessionLog from ``session.json`` text and ``frames.bin`` bytes."""
    data = json.loads(document)
    data["frames"] = split_frame_log(frame_log)
    return SessionLog.model_validate(data)


def save_session_log(log: SessionLog, directory: Union[str, Path]) -> Path:
    """Write ``session.json`` and ``frames.bin`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / SESSION_FILE).write_text(session_to_json(log), encoding="utf-8")
    (directory / FRAMES_FILE).write_bytes(frames_to_bytes(log))
    return directory


def load_session_log(directory: Union[str, Path]) -> SessionLog:
    """
    Read a session directory written by :func:`save_session_log`.

    Raises:
        ScenarioError: Missing files
        FramingError: Bad frame log header
    """
    directory = Path(directory)
    session_file, frames_file = directory / SESSION_FILE, directory / FRAMES_FILE
    if not session_file.is_file() or not frames_file.is_file():
        raise ScenarioError(f"{directory} is not a session directory")
    return session_from_parts(session_file.read_text(encoding="utf-8"), frames_file.read_bytes())
