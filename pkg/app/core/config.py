"""
Configuration management using Pydantic Settings.
Loads environment variables and provides type-safe configuration.
"""

from typing import Literal, Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application configuration settings."""

    # Application Settings
    app_name: str = "Bladder Volume Monitor"
    app_version: str = "1.0.0"
    debug: bool = False
    host: str = "0.0.0.0"
    port: int = 8000
    log_level: str = "INFO"

    # Session Storage
    storage_type: Literal["file", "memory"] = "file"
    session_storage_path: str = "./data/sessions"

    # Scenario Settings
    scenario_dir: Optional[str] = None  # extra *.yaml scenarios
    default_seed: int = 7
    trace_export_limit: int = 4  # traces written by `sim --traces-dir`

    # Streamed Ingestion
    ingest_max_streams: int = Field(64, ge=1)
    ingest_idle_timeout_s: float = Field(900.0, gt=0)

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )


# Global settings instance
settings = Settings()
