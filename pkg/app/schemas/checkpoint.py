"""
Pydantic schemas for stage checkpoints.
"""

from enum import Enum
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field


class Stage(str, Enum):
    """Training stage that produced a checkpoint."""

    MAE = "mae"
    TEACHER = "teacher"
    STUDENT_FT = "student_ft"
    DISTILLED = "distilled"


class CheckpointManifest(BaseModel):
    """Plain-text manifest stored next to the weights file.

    Documented keys: ``stage``, ``epoch``, ``seed``, ``config_hash``,
    ``created_at``, ``fold``, ``architecture`` (the architecture needed to
    rebuild the module) and ``metrics`` (last-epoch training metrics).
    """

    model_config = ConfigDict(frozen=True)

    stage: Stage
    epoch: int = Field(..., ge=0)
    seed: int
    config_hash: str
    created_at: str
    fold: int | None = None
    architecture: dict[str, Any] = Field(default_factory=dict)
    metrics: dict[str, float] = Field(default_factory=dict)
    package_version: str | None = None


class Checkpoint(BaseModel):
    """Handle to a checkpoint directory on disk."""

    model_config = ConfigDict(frozen=True)

    path: Path
    manifest: CheckpointManifest

    @property
    def stage(self) -> Stage:
        """Stage recorded in the manifest."""
        return self.manifest.stage

    @property
    def weights_path(self) -> Path:
        """Location of the serialized state dict."""
        return self.path / "weights.pt"

    @property
    def manifest_path(self) -> Path:
        """Location of the manifest."""
        return self.path / "manifest.json"
