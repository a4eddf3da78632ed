"""
Frozen teacher handle used during distillation.
"""

from typing import Sequence

import torch

from app.core.exceptions import FreezeViolationError, FrozenModelError
from app.core.logging import get_logger
from app.core.reproducibility import parameter_digest
from app.kd.inference import predict_probabilities, to_prob_outputs
from app.kd.teacher.model import TeacherNetwork
from app.kd.teacher.trainer import load_teacher
from app.kd.training import clip_tensor
from app.schemas.checkpoint import Checkpoint
from app.schemas.samples import ProbOutput, VideoClip

logger = get_logger(__name__)


class FrozenTeacher:
    """Read-only, eval-mode teacher whose parameters never require grad.

    The parameter digest is captured at construction; :meth:`verify_unchanged`
    compares against it.
    """

    def __init__(self, model: TeacherNetwork, source: Checkpoint | None = None):
        """Freeze ``model`` in place.

        Args:
            model: Trained teacher
            source: Checkpoint it was loaded from, if any
        """
        model.eval()
        model.requires_grad_(False)
        self._model = model
        self.source = source
        self.digest = parameter_digest(model)

    @property
    def model(self) -> TeacherNetwork:
        """Underlying network; its parameters are frozen."""
        return self._model

    def train(self, mode: bool = True) -> None:
        """Reject switching the teacher back to training mode.

        Raises:
            FrozenModelError: If ``mode`` is True
        """
        if mode:
            raise FrozenModelError("A frozen teacher cannot be put into training mode")

    def predict_proba(self, clips: torch.Tensor, batch_size: int = 16) -> torch.Tensor:
        """Detached (N, 2) float64 probabilities for a (N, 1, T, H, W) tensor."""
        return predict_probabilities(self._model, clips, batch_size).detach()

    def predict(self, clips: Sequence[VideoClip]) -> list[ProbOutput]:
        """Probability outputs for a list of clips."""
        return to_prob_outputs(self.predict_proba(clip_tensor(clips)))

    def verify_unchanged(self) -> None:
        """Check that no parameter or buffer moved since freezing.

        Raises:
            FreezeViolationError: On any digest change or re-enabled gradient
        """
        if any(p.requires_grad for p in self._model.parameters()):
            raise FreezeViolationError("A frozen teacher parameter requires grad again")
        current = parameter_digest(self._model)
        if current != self.digest:
            raise FreezeViolationError(
                "Teacher parameters changed during distillation",
                details={"frozen": self.digest, "current": current},
            )


def freeze(checkpoint: Checkpoint) -> FrozenTeacher:
    """Load a teacher checkpoint as a frozen handle."""
    teacher = FrozenTeacher(load_teacher(checkpoint), source=checkpoint)
    logger.info("teacher_frozen", path=str(checkpoint.path), digest=teacher.digest[:12])
    return teacher
