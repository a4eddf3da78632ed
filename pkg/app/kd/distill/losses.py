"""
Distillation objective: L1 distance between teacher and student
probabilities, mixed with cross-entropy under a geometric schedule.
"""

from typing import TypeVar

import torch
from pydantic import BaseModel, ConfigDict, Field

from app.core.exceptions import InvalidInputError, ShapeMismatchError

LossT = TypeVar("LossT", float, torch.Tensor)


class KDSchedule(BaseModel):
    """KD weight ``alpha ** epoch`` with epochs counted from 1."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.85, gt=0.0, lt=1.0)
    epoch_index_base: int = 1

    def kd_weight(self, epoch: int) -> float:
        """Weight of the KD term at ``epoch``.

        Raises:
            InvalidInputError: If ``epoch`` precedes the first epoch
        """
        if epoch < self.epoch_index_base:
            raise InvalidInputError(
                f"Epoch must be >= {self.epoch_index_base}, got {epoch}"
            )
        return self.alpha ** (epoch - self.epoch_index_base + 1)

    def ce_weight(self, epoch: int) -> float:
        """Weight of the cross-entropy term, ``1 - kd_weight``."""
        return 1.0 - self.kd_weight(epoch)


def kd_loss(teacher_out: torch.Tensor, student_out: torch.Tensor) -> torch.Tensor:
    """Mean over pairs of the L1 distance between probability vectors.

    Args:
        teacher_out: (B, 2) teacher probabilities; must not require grad
        student_out: (B, 2) student probabilities

    Returns:
        Scalar in [0, 2]

    Raises:
        ShapeMismatchError: If the batches differ in shape
        InvalidInputError: If the teacher output carries gradient
    """
    if teacher_out.shape != student_out.shape:
        raise ShapeMismatchError(
            f"Teacher batch {tuple(teacher_out.shape)} and student batch "
            f"{tuple(student_out.shape)} differ"
        )
    if teacher_out.ndim != 2 or teacher_out.shape[0] == 0:
        raise ShapeMismatchError(f"Expected a non-empty (B, 2) batch, got {tuple(teacher_out.shape)}")
    if teacher_out.requires_grad:
        raise InvalidInputError("Teacher outputs must be detached from the graph")
    teacher_out = teacher_out.to(student_out.dtype)
    return (teacher_out - student_out).abs().sum(dim=-1).mean()


def combined_loss(kd: LossT, ce: LossT, schedule: KDSchedule, epoch: int) -> LossT:
    """Convex mix ``w * kd + (1 - w) * ce`` with ``w = schedule.kd_weight(epoch)``."""
    weight = schedule.kd_weight(epoch)
    return weight * kd + (1.0 - weight) * ce
