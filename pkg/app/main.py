"""
Main FastAPI application.
Entry point for the Bladder Volume Monitor processing service.
"""

import logging
from contextlib import asynccontextmanager

import uvicorn
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from app.api import ingest, sessions
from app.core.config import settings
from app.core.exceptions import (
    EstimationError,
    IntegrityError,
    LinkError,
    MonitorError,
    ParameterError,
    ScenarioError,
)
from app.core.logging import configure_logging
from app.db.database import get_store
from app.models.schemas import ErrorResponse, HealthResponse


logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    Lifespan context manager for startup and shutdown events.
    """
    # Startup
    configure_logging(settings.log_level)
    logger.info("Starting %s v%s", settings.app_name, settings.app_version)
    logger.info("Session storage: %s", settings.storage_type)

    yield

    # Shutdown
    await get_store().close()
    logger.info("Session store closed")


# Create FastAPI application
app = FastAPI(
    title=settings.app_name,
    version=settings.app_version,
    description="""
    Bladder Volume Monitor - processing service

    Local stand-in for the cloud side of a wearable A-mode bladder monitor:
    timestamp frames go in, bladder volume estimates come out.

    ## Features

    - **Scenario runs**: Simulate flask and in-vivo-like experiments end to end
    - **Session logs**: Stored frame streams with their estimates and ground truth
    - **Replay**: Re-run the estimator over a stored stream and verify it
    - **Reports**: Estimate vs truth vs the clinical 0.52 formula
    - **Streaming ingestion**: POST 8-byte timestamp frames as they arrive
    """,
    docs_url="/docs",
    redoc_url="/redoc",
    lifespan=lifespan,
    debug=settings.debug
)

# Configure CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(
    sessions.router,
    tags=["Sessions"]
)

app.include_router(
    ingest.router,
    tags=["Ingestion"]
)


ERROR_STATUS = (
    (ScenarioError, 404),
    (IntegrityError, 409),
    (LinkError, 400),
    (EstimationError, 422),
    (ParameterError, 422),
)


@app.exception_handler(MonitorError)
async def monitor_error_handler(request: Request, exc: MonitorError):
    """Map domain errors to JSON error responses."""
    status = next((code for cls, code in ERROR_STATUS if isinstance(exc, cls)), 400)
    logger.warning("%s %s -> %d: %s", request.method, request.url.path, status, exc)
    body = ErrorResponse(error=type(exc).__name__, detail=str(exc))
    return JSONResponse(status_code=status, content=body.model_dump())


def _health() -> HealthResponse:
    return HealthResponse(
        status="healthy",
        app_name=settings.app_name,
        version=settings.app_version,
        storage_type=settings.storage_type
    )


@app.get("/", response_model=HealthResponse)
async def root():
    """
    Root endpoint - Health check.

    Returns basic information about the API and its configuration.
    """
    return _health()


@app.get("/health", response_model=HealthResponse)
async def health_check():
    """
    Health check endpoint.

    Used for monitoring and ensuring the service is running correctly.
    """
    return _health()


if __name__ == "__main__":

    uvicorn.run(
        "app.main:app",
        host=settings.host,
        port=settings.port,
        reload=settings.debug
    )
