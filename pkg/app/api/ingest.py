"""
API routes for streamed frame ingestion.
Each POSTed frame is pushed through the per-session consumer as it arrives.

Open streams are bounded: a stream idle for longer than the configured
timeout, or the least recently fed one once the limit is reached, is
dropped together with its open sweep.
"""

import logging
import time
from collections import OrderedDict
from typing import Dict, List, Optional

from fastapi import APIRouter, Query, Request

from app.core.config import settings
from app.core.exceptions import ScenarioError
from app.harness.scenarios import get_scenario
from app.link.protocol import iter_frames
from app.models.schemas import IngestCloseResponse, IngestResponse
from app.processing.estimator import EstimatorConfig
from app.processing.stream import SessionProcessor, SweepResult
from app.sim.phantom import TransducerArray


logger = logging.getLogger(__name__)

router = APIRouter()

# One open consumer per wire session id, least recently fed first.
processors: "OrderedDict[int, SessionProcessor]" = OrderedDict()
last_fed: Dict[int, float] = {}
clock = time.monotonic


def _drop(session_id: int, reason: str) -> None:
    processor = processors.pop(session_id)
    last_fed.pop(session_id, None)
    processor.close(expect_complete=False)
    logger.warning(
        "dropped stream for session %d (%s) after %d frames and %d sweeps",
        session_id, reason, processor.frames_seen, len(processor.results),
    )


def evict_streams(now: float) -> None:
    """Drop idle streams, then the least recently fed ones above the limit."""
    for session_id in [s for s in processors if now - last_fed.get(s, now) > settings.ingest_idle_timeout_s]:
        _drop(session_id, "idle")
    while len(processors) > settings.ingest_max_streams:
        _drop(next(iter(processors)), "too many open streams")


def _processor(session_id: int, scenario: Optional[str]) -> SessionProcessor:
    now = clock()
    if session_id not in processors:
        if scenario is not None:
            s = get_scenario(scenario)
            processors[session_id] = SessionProcessor(s.array, s.estimator)
        else:
            processors[session_id] = SessionProcessor(TransducerArray.default_grid(), EstimatorConfig())
        logger.info("opened stream for session %d", session_id)
    processors.move_to_end(session_id)
    last_fed[session_id] = now
    evict_streams(now)
    return processors[session_id]


@router.post("/ingest/frames", response_model=IngestResponse)
async def ingest_frames(
    request: Request,
    scenario: Optional[str] = Query(
        None, description="Scenario whose array and estimator settings new sessions use"
    ),
):
    """
    Push a body of concatenated 8-byte frames (application/octet-stream).

    Frames are routed by their session id; every sweep they complete is
    estimated immediately and returned.
    """
    body = await request.body()
    frames = list(iter_frames(body, strict=True))
    results: List[SweepResult] = []
    sessions: List[int] = []
    for frame in frames:
        if frame.session_id not in sessions:
            sessions.append(frame.session_id)
        result = _processor(frame.session_id, scenario).feed(frame)
        if result is not None:
            results.append(result)
    return IngestResponse(frames_received=len(frames), sessions=sessions, results=results)


@router.post("/ingest/{session_id}/close", response_model=IngestCloseResponse)
async def close_stream(
    session_id: int,
    expect_complete: bool = Query(True, description="Treat a trailing sweep ending on transducer 4 as complete"),
):
    """End a streamed session and flush its trailing sweep."""
    processor = processors.pop(session_id, None)
    last_fed.pop(session_id, None)
    if processor is None:
        raise ScenarioError(f"no open stream for session {session_id}")
    final = processor.close(expect_complete)
    return IngestCloseResponse(
        session_id=session_id,
        frames_seen=processor.frames_seen,
        sweeps=len(processor.results),
        final=final,
    )
