"""On-disk artifacts: stage checkpoints and their manifests."""

from app.infrastructure.storage.checkpoint_store import (
    CheckpointStore,
    require_fresh,
    require_stage,
)
