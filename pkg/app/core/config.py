"""
Core configuration settings for the POD KD pipeline.
Uses Pydantic Settings for environment variable management.
"""

from pathlib import Path
from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings loaded from environment variables.

    Experiment hyper-parameters live in ``app.schemas.experiment`` and are
    loaded from YAML; these settings only cover where and how a process runs.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    APP_NAME: str = "POD KD Pipeline"
    ENVIRONMENT: Literal["development", "staging", "production"] = "development"

    # Output
    OUTPUT_ROOT: Path = Path("./runs")

    # Compute
    DEVICE: Literal["cpu", "cuda", "mps"] = "cpu"
    NUM_WORKERS: int = Field(default=0, ge=0)
    DETERMINISTIC: bool = True
    TORCH_THREADS: int | None = Field(default=None, ge=1)

    # Observability
    LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"
    LOG_FORMAT: Literal["json", "text"] = "json"

    @field_validator("OUTPUT_ROOT", mode="before")
    @classmethod
    def expand_output_root(cls, v: str | Path) -> Path:
        """Expand ``~`` in the output root."""
        return Path(v).expanduser()

    @property
    def is_development(self) -> bool:
        """Check if running in development mode."""
        return self.ENVIRONMENT == "development"


# Global settings instance
settings = Settings()
