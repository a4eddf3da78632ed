"""Pydantic data model shared by every pipeline stage."""

from app.schemas.checkpoint import Checkpoint, CheckpointManifest, Stage
from app.schemas.folds import FoldSplit
from app.schemas.samples import (
    ClassLabel,
    LabeledSample,
    Modality,
    ProbOutput,
    VideoClip,
    Volume3D,
    decode_one_hot,
    one_hot,
)
