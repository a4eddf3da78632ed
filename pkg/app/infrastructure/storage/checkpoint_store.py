"""
Checkpoint persistence: one directory per checkpoint holding ``weights.pt``
and a plain-text JSON ``manifest.json``.
"""

import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import torch

from app import __version__
from app.core.exceptions import (
    CheckpointNotFoundError,
    StageMismatchError,
    StaleArtifactError,
)
from app.core.logging import get_logger
from app.schemas.checkpoint import Checkpoint, CheckpointManifest, Stage

logger = get_logger(__name__)

_EPOCH_DIR = re.compile(r"^epoch_(\d{4})$")


class CheckpointStore:
    """Save, load and select stage checkpoints below a root directory."""

    def __init__(self, root: Path):
        """Initialize checkpoint store.

        Args:
            root: Directory under which ``<stage>/<scope>/epoch_XXXX`` dirs live
        """
        self.root = root

    def stage_dir(self, stage: Stage, scope: str | None = None) -> Path:
        """Directory holding every epoch checkpoint of one stage run."""
        base = self.root / stage.value
        return base / scope if scope else base

    def save(
        self,
        stage: Stage,
        state_dict: dict[str, torch.Tensor],
        *,
        epoch: int,
        seed: int,
        config_hash: str,
        scope: str | None = None,
        fold: int | None = None,
        architecture: dict[str, Any] | None = None,
        metrics: dict[str, float] | None = None,
    ) -> Checkpoint:
        """Write one checkpoint.

        Args:
            stage: Producing stage
            state_dict: Module weights
            epoch: Epoch index (1-based; 0 for an untrained initialisation)
            seed: Seed of the producing run
            config_hash: Stage hash of the producing config
            scope: Sub-directory distinguishing runs of the same stage
            fold: Fold index, if any
            architecture: Serialized model config needed to rebuild the module
            metrics: Metrics to record alongside the weights

        Returns:
            Handle to the saved checkpoint
        """
        path = self.stage_dir(stage, scope) / f"epoch_{epoch:04d}"
        path.mkdir(parents=True, exist_ok=True)

        manifest = CheckpointManifest(
            stage=stage,
            epoch=epoch,
            seed=seed,
            config_hash=config_hash,
            created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            fold=fold,
            architecture=architecture or {},
            metrics=metrics or {},
            package_version=__version__,
        )
        checkpoint = Checkpoint(path=path, manifest=manifest)

        cpu_state = {k: v.detach().cpu().clone() for k, v in state_dict.items()}
        torch.save(cpu_state, checkpoint.weights_path)
        checkpoint.manifest_path.write_text(
            manifest.model_dump_json(indent=2) + "\n", encoding="utf-8"
        )

        logger.info(
            "checkpoint_saved",
            stage=stage.value,
            epoch=epoch,
            path=str(path),
            config_hash=config_hash[:12],
        )
        return checkpoint

    @staticmethod
    def open(path: Path) -> Checkpoint:
        """Read a checkpoint manifest without loading weights.

        Raises:
            CheckpointNotFoundError: If the directory or manifest is missing
        """
        manifest_path = path / "manifest.json"
        if not manifest_path.is_file():
            raise CheckpointNotFoundError(f"No checkpoint manifest at {path}")
        manifest = CheckpointManifest.model_validate_json(
            manifest_path.read_text(encoding="utf-8")
        )
        return Checkpoint(path=path, manifest=manifest)

    @staticmethod
    def load_state(checkpoint: Checkpoint) -> dict[str, torch.Tensor]:
        """Load the weights of a checkpoint onto the CPU."""
        if not checkpoint.weights_path.is_file():
            raise CheckpointNotFoundError(f"Missing weights file in {checkpoint.path}")
        return torch.load(checkpoint.weights_path, map_location="cpu", weights_only=True)

    def epochs(self, stage: Stage, scope: str | None = None) -> list[int]:
        """Sorted epochs with a saved checkpoint."""
        directory = self.stage_dir(stage, scope)
        if not directory.is_dir():
            return []
        found = []
        for child in directory.iterdir():
            match = _EPOCH_DIR.match(child.name)
            if match and (child / "manifest.json").is_file():
                found.append(int(match.group(1)))
        return sorted(found)

    def select(
        self,
        stage: Stage,
        scope: str | None = None,
        epoch: int | None = None,
    ) -> Checkpoint:
        """Pick a checkpoint of one stage run.

        Args:
            stage: Stage to select from
            scope: Run sub-directory
            epoch: Requested epoch; None or a missing epoch falls back to the
                latest epoch not after it

        Returns:
            Selected checkpoint

        Raises:
            CheckpointNotFoundError: If the stage run has no checkpoint
        """
        available = self.epochs(stage, scope)
        if not available:
            raise CheckpointNotFoundError(
                f"No {stage.value} checkpoint under {self.stage_dir(stage, scope)}",
                details={"stage": stage.value, "scope": scope},
            )
        if epoch is None:
            chosen = available[-1]
        else:
            earlier = [e for e in available if e <= epoch]
            chosen = earlier[-1] if earlier else available[0]
            if chosen != epoch:
                logger.warning(
                    "checkpoint_epoch_fallback",
                    stage=stage.value,
                    requested=epoch,
                    selected=chosen,
                )
        return self.open(self.stage_dir(stage, scope) / f"epoch_{chosen:04d}")

    def latest(self, stage: Stage, scope: str | None = None) -> Checkpoint:
        """Most recent checkpoint of one stage run."""
        return self.select(stage, scope, None)


def require_stage(checkpoint: Checkpoint, *allowed: Stage) -> None:
    """Reject checkpoints from any stage not in ``allowed``.

    Raises:
        StageMismatchError: On a stage mismatch
    """
    if checkpoint.stage not in allowed:
        raise StageMismatchError(
            f"Checkpoint {checkpoint.path} has stage '{checkpoint.stage.value}', "
            f"expected one of {[s.value for s in allowed]}",
            details={"stage": checkpoint.stage.value},
        )


def require_fresh(checkpoint: Checkpoint, expected_hash: str, force: bool = False) -> None:
    """Refuse an upstream checkpoint built from a different config.

    Raises:
        StaleArtifactError: On hash mismatch unless ``force``
    """
    if checkpoint.manifest.config_hash == expected_hash:
        return
    if force:
        logger.warning(
            "stale_artifact_forced",
            path=str(checkpoint.path),
            recorded=checkpoint.manifest.config_hash[:12],
            expected=expected_hash[:12],
        )
        return
    raise StaleArtifactError(
        f"Upstream checkpoint {checkpoint.path} was produced by a different config; "
        "rerun the upstream stage or pass --force",
        details={
            "recorded": checkpoint.manifest.config_hash,
            "expected": expected_hash,
        },
    )
