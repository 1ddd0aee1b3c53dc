"""
Request and response models of the HTTP API.
"""

from typing import List, Optional
from datetime import datetime, timezone

from pydantic import BaseModel, Field

from app.harness.report import SessionReport
from app.harness.runner import SessionLog, SweepRecord
from app.harness.scenarios import Scenario
from app.processing.stream import SweepResult


def _now() -> datetime:
    return datetime.now(timezone.utc)


class HealthResponse(BaseModel):
    """Health check response."""
    status: str
    app_name: str
    version: str
    storage_type: str
    timestamp: datetime = Field(default_factory=_now)


class ErrorResponse(BaseModel):
    """Body of every MonitorError mapped to an HTTP error."""
    error: str
    detail: str


class ScenarioInfo(BaseModel):
    """Short description of a runnable scenario."""
    name: str
    description: str
    sample_count: int
    noise_snr_db: Optional[float] = None
    accuracy_bound: Optional[float] = None

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "ScenarioInfo":
        return cls(
            name=scenario.name,
            description=scenario.description,
            sample_count=len(scenario.sample_times_min),
            noise_snr_db=scenario.noise_snr_db,
            accuracy_bound=scenario.accuracy_bound,
        )


class ScenarioListResponse(BaseModel):
    data: List[ScenarioInfo]
    count: int


class RunRequest(BaseModel):
    """Overrides applied to a scenario before it runs."""
    seed: Optional[int] = Field(None, ge=0)
    noise_snr_db: Optional[float] = None
    noiseless: bool = False
    store: bool = True


class SessionSummary(BaseModel):
    """Headline numbers of a stored session."""
    session_id: str
    scenario: str
    seed: int
    sample_count: int
    frame_count: int
    estimate_count: int

    @classmethod
    def from_log(cls, log: SessionLog) -> "SessionSummary":
        return cls(
            session_id=log.session_id,
            scenario=log.scenario.name,
            seed=log.scenario.seed,
            sample_count=len(log.records),
            frame_count=log.frame_count,
            estimate_count=sum(r.estimate is not None for r in log.records),
        )


class RunResponse(BaseModel):
    session: SessionSummary
    records: List[SweepRecord]


class PaginatedSessionResponse(BaseModel):
    """Response model for paginated session listings."""
    data: List[SessionSummary]
    count: int
    total: int
    page: int
    page_size: int
    total_pages: int
    has_next: bool
    has_prev: bool
    generated_at: datetime = Field(default_factory=_now)


class ReportResponse(BaseModel):
    report: SessionReport
    summary: str


class ReplayResponse(BaseModel):
    session_id: str
    sweeps: int
    results: List[SweepResult]


class IngestResponse(BaseModel):
    """Outcome of one batch of streamed frames."""
    frames_received: int
    sessions: List[int]
    results: List[SweepResult]


class IngestCloseResponse(BaseModel):
    session_id: int
    frames_seen: int
    sweeps: int
    final: Optional[SweepResult] = None
