"""
Volumetric student: 3D ViT encoder, linear adapter to the teacher feature
width and a two-way classification layer.
"""

import torch
from torch import nn

from app.core.exceptions import ConfigMismatchError
from app.core.logging import get_logger
from app.domain.interfaces.classifier import ProbabilisticClassifier
from app.infrastructure.storage import CheckpointStore, require_stage
from app.kd.mae.model import ViTEncoder3D
from app.kd.training import device
from app.schemas.architecture import EncoderConfig, StudentConfig
from app.schemas.checkpoint import Checkpoint, Stage

logger = get_logger(__name__)

ENCODER_PREFIX = "encoder."


class StudentClassifier(nn.Module, ProbabilisticClassifier):
    """Encoder -> pooled token feature -> adapter -> 2-way head.

    No activation sits between the adapter and the head.
    """

    def __init__(self, config: StudentConfig):
        super().__init__()
        self.config = config
        self.encoder = ViTEncoder3D(config.encoder)
        self.adapter = nn.Linear(config.adapter_in, config.adapter_out)
        self.head = nn.Linear(config.adapter_out, config.num_classes)
        nn.init.xavier_uniform_(self.adapter.weight)
        nn.init.zeros_(self.adapter.bias)
        # near-uniform predictions at initialisation
        nn.init.normal_(self.head.weight, mean=0.0, std=0.01)
        nn.init.zeros_(self.head.bias)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Adapter output, the width of the teacher feature."""
        return self.adapter(self.encoder.forward_features(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))


def build_student(mae_checkpoint: Checkpoint | None, config: StudentConfig) -> StudentClassifier:
    """Construct a student, optionally initialising its encoder from an MAE.

    Args:
        mae_checkpoint: MAE checkpoint, or None for a random encoder
        config: Student architecture

    Returns:
        Student model

    Raises:
        StageMismatchError: If the checkpoint is not an MAE checkpoint
        ConfigMismatchError: If the MAE encoder differs from ``config.encoder``
    """
    model = StudentClassifier(config)
    if mae_checkpoint is None:
        logger.info("student_built", init="random")
        return model

    require_stage(mae_checkpoint, Stage.MAE)
    recorded = EncoderConfig.model_validate(mae_checkpoint.manifest.architecture["encoder"])
    if recorded != config.encoder:
        raise ConfigMismatchError(
            "MAE encoder does not match the student encoder config",
            details={
                "checkpoint": recorded.model_dump(mode="json"),
                "expected": config.encoder.model_dump(mode="json"),
            },
        )
    state = CheckpointStore.load_state(mae_checkpoint)
    encoder_state = {
        name[len(ENCODER_PREFIX) :]: tensor
        for name, tensor in state.items()
        if name.startswith(ENCODER_PREFIX)
    }
    model.encoder.load_state_dict(encoder_state)
    logger.info("student_built", init="mae", source=str(mae_checkpoint.path))
    return model


def student_architecture(model: StudentClassifier) -> dict:
    """Manifest entry needed to rebuild ``model``."""
    return {"student": model.config.model_dump(mode="json")}


def load_student(checkpoint: Checkpoint) -> StudentClassifier:
    """Rebuild a fine-tuned or distilled student in eval mode.

    Raises:
        StageMismatchError: If the checkpoint holds neither stage
    """
    require_stage(checkpoint, Stage.STUDENT_FT, Stage.DISTILLED)
    config = StudentConfig.model_validate(checkpoint.manifest.architecture["student"])
    model = StudentClassifier(config)
    model.load_state_dict(CheckpointStore.load_state(checkpoint))
    model.to(device())
    return model.eval()
