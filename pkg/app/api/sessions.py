"""
API routes for scenario runs and stored sessions.
Runs shipped scenarios, lists stored sessions, and serves replays and reports.
"""

import math
from typing import Optional

from fastapi import APIRouter, HTTPException, Query
from fastapi.concurrency import run_in_threadpool

from app.core.exceptions import ScenarioError
from app.db.database import get_store
from app.harness.report import build_report, render_summary
from app.harness.runner import SessionLog, replay, run_scenario
from app.harness.scenarios import get_scenario, list_scenarios
from app.models.schemas import (
    PaginatedSessionResponse,
    ReplayResponse,
    ReportResponse,
    RunRequest,
    RunResponse,
    ScenarioInfo,
    ScenarioListResponse,
    SessionSummary,
)


router = APIRouter()


async def _load(session_id: str) -> SessionLog:
    log = await get_store().get_session(session_id)
    if log is None:
        raise ScenarioError(f"unknown session {session_id!r}")
    return log


@router.get("/scenarios", response_model=ScenarioListResponse)
async def get_scenarios():
    """
    List the runnable scenarios.

    Shipped scenarios come first, then any found in the configured scenario directory.
    """
    infos = [ScenarioInfo.from_scenario(get_scenario(name)) for name in list_scenarios()]
    return ScenarioListResponse(data=infos, count=len(infos))


@router.post("/scenarios/{name}/run", response_model=RunResponse)
async def run_named_scenario(name: str, request: Optional[RunRequest] = None):
    """
    Run a scenario and optionally store its session log.

    Body fields override the scenario's seed and noise level; `noiseless`
    forces a noise-free run.
    """
    request = request or RunRequest()
    scenario = get_scenario(name)
    updates = {}
    if request.seed is not None:
        updates["seed"] = request.seed
    if request.noiseless:
        updates["noise_snr_db"] = None
    elif request.noise_snr_db is not None:
        updates["noise_snr_db"] = request.noise_snr_db
    if updates:
        scenario = scenario.with_overrides(**updates)

    log = await run_in_threadpool(run_scenario, scenario)
    if request.store:
        await get_store().save_session(log)
    return RunResponse(session=SessionSummary.from_log(log), records=log.records)


@router.get("/sessions", response_model=PaginatedSessionResponse)
async def get_sessions(
    page: int = Query(1, ge=1, description="Page number (starts at 1)"),
    page_size: int = Query(20, ge=1, le=100, description="Number of sessions per page (max 100)"),
):
    """
    Retrieve stored sessions with pagination.

    **Example:**
    - First page: `GET /sessions?page=1&page_size=20`
    """
    store = get_store()
    total = await store.get_session_count()

    skip = (page - 1) * page_size
    total_pages = math.ceil(total / page_size) if total > 0 else 1

    if page > total_pages and total > 0:
        raise HTTPException(
            status_code=400,
            detail=f"Page {page} does not exist. Total pages: {total_pages}"
        )

    logs = await store.get_paginated_sessions(skip=skip, limit=page_size)
    return PaginatedSessionResponse(
        data=[SessionSummary.from_log(log) for log in logs],
        count=len(logs),
        total=total,
        page=page,
        page_size=page_size,
        total_pages=total_pages,
        has_next=page < total_pages,
        has_prev=page > 1,
    )


@router.get("/sessions/{session_id}/report", response_model=ReportResponse)
async def get_session_report(session_id: str):
    """Per-sample table of a stored session: truth, estimate, error and clinical volume."""
    report = build_report(await _load(session_id))
    return ReportResponse(report=report, summary=render_summary(report))


@router.post("/sessions/{session_id}/replay", response_model=ReplayResponse)
async def replay_session(session_id: str):
    """
    Re-run the estimator over a stored frame stream.

    Responds 409 when the replay disagrees with the stored estimates.
    """
    log = await _load(session_id)
    results = await run_in_threadpool(replay, log)
    return ReplayResponse(session_id=session_id, sweeps=len(results), results=results)


@router.delete("/sessions/{session_id}")
async def delete_session(session_id: str):
    """Remove a stored session."""
    if not await get_store().delete_session(session_id):
        raise ScenarioError(f"unknown session {session_id!r}")
    return {"message": f"session {session_id} deleted"}
