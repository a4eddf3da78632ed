"""
Helpers shared by the training stages: tensors from samples, loaders,
optimisers, divergence checks and per-epoch records.
"""

import itertools
import math
from typing import Iterator, Sequence

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field
from torch import nn
from torch.utils.data import DataLoader, TensorDataset

from app.core.config import settings
from app.core.exceptions import (
    FrozenModelError,
    InvalidInputError,
    SingleClassError,
    TrainingDivergedError,
)
from app.core.reproducibility import torch_generator
from app.schemas.checkpoint import Checkpoint
from app.schemas.experiment import StageConfig
from app.schemas.samples import ClassLabel, LabeledSample, VideoClip, Volume3D


class EpochRecord(BaseModel):
    """Metrics of one finished epoch."""

    model_config = ConfigDict(frozen=True)

    epoch: int = Field(..., ge=1)
    loss: float
    metrics: dict[str, float] = Field(default_factory=dict)


class TrainingResult(BaseModel):
    """Final checkpoint of a stage run plus its epoch history."""

    model_config = ConfigDict(frozen=True)

    checkpoint: Checkpoint
    history: list[EpochRecord] = Field(default_factory=list)
    reused: bool = False

    @property
    def losses(self) -> list[float]:
        """Per-epoch mean losses."""
        return [record.loss for record in self.history]


def device() -> torch.device:
    """Device selected by ``settings.DEVICE``."""
    return torch.device(settings.DEVICE)


def volume_tensor(volumes: Sequence[Volume3D]) -> torch.Tensor:
    """Stack volumes into (B, 1, H, W, D)."""
    return torch.from_numpy(np.stack([v.data for v in volumes])).float().unsqueeze(1)


def clip_tensor(clips: Sequence[VideoClip]) -> torch.Tensor:
    """Stack H x W x T clips into the (B, 1, T, H, W) video layout."""
    stacked = np.stack([c.frames for c in clips])
    return torch.from_numpy(stacked).float().permute(0, 3, 1, 2).unsqueeze(1).contiguous()


def sample_tensor(samples: Sequence[LabeledSample]) -> torch.Tensor:
    """Tensor of the samples' volumes or clips."""
    data = [s.data for s in samples]
    if all(isinstance(d, Volume3D) for d in data):
        return volume_tensor(data)  # type: ignore[arg-type]
    if all(isinstance(d, VideoClip) for d in data):
        return clip_tensor(data)  # type: ignore[arg-type]
    raise InvalidInputError("Cannot batch a mix of volumes and clips")


def label_tensor(samples: Sequence[LabeledSample]) -> torch.Tensor:
    """Class indices (B,) of labeled samples."""
    return torch.tensor([labeled(s).index for s in samples], dtype=torch.long)


def labeled(sample: LabeledSample) -> ClassLabel:
    """Label of a sample that must carry one."""
    if sample.label is None:
        raise InvalidInputError(f"Sample {sample.sample_id} is unlabeled")
    return sample.label


def require_both_classes(samples: Sequence[LabeledSample], what: str) -> None:
    """Reject empty or single-class training sets.

    Raises:
        SingleClassError: If fewer than two classes are present
    """
    if not samples:
        raise InvalidInputError(f"{what} is empty")
    present = {labeled(s) for s in samples}
    if len(present) < 2:
        raise SingleClassError(
            f"{what} holds only class '{next(iter(present)).value}'",
            details={"n_samples": len(samples)},
        )


def inverse_frequency_weights(labels: torch.Tensor, num_classes: int = 2) -> torch.Tensor:
    """Class weights ``n / (num_classes * count_c)``."""
    counts = torch.bincount(labels, minlength=num_classes).double()
    weights = labels.numel() / (num_classes * counts.clamp(min=1.0))
    return weights.float()


def make_loader(
    *tensors: torch.Tensor,
    batch_size: int,
    seed: int,
    shuffle: bool = True,
    drop_last: bool = False,
) -> DataLoader:
    """Seeded loader over aligned tensors."""
    return DataLoader(
        TensorDataset(*tensors),
        batch_size=batch_size,
        shuffle=shuffle,
        drop_last=drop_last,
        generator=torch_generator(seed),
        num_workers=settings.NUM_WORKERS,
    )


def epoch_batches(loader: DataLoader, max_steps: int | None) -> Iterator[list[torch.Tensor]]:
    """Iterate one epoch, optionally truncated to ``max_steps`` batches."""
    return itertools.islice(iter(loader), max_steps)


def build_optimizer(model: nn.Module, stage: StageConfig) -> torch.optim.Optimizer:
    """Adam or AdamW over every parameter of ``model``.

    Raises:
        FrozenModelError: If any parameter is frozen
    """
    frozen = [name for name, p in model.named_parameters() if not p.requires_grad]
    if frozen:
        raise FrozenModelError(
            f"Refusing to optimise a model with {len(frozen)} frozen parameters",
            details={"parameters": frozen[:10]},
        )
    params = list(model.parameters())
    if stage.optimizer == "adam":
        return torch.optim.Adam(params, lr=stage.lr, weight_decay=stage.weight_decay)
    return torch.optim.AdamW(params, lr=stage.lr, weight_decay=stage.weight_decay)


def ensure_finite(loss: torch.Tensor, stage: str, epoch: int, step: int) -> None:
    """Abort on a non-finite loss.

    Raises:
        TrainingDivergedError: If the loss is NaN or infinite
    """
    value = float(loss.detach())
    if not math.isfinite(value):
        raise TrainingDivergedError(
            f"{stage} loss diverged to {value} at epoch {epoch}, step {step}; "
            "lower the learning rate or check the inputs",
            details={"stage": stage, "epoch": epoch, "step": step},
        )


def current_lr(optimizer: torch.optim.Optimizer) -> float:
    """Learning rate of the first parameter group."""
    return float(optimizer.param_groups[0]["lr"])


def should_checkpoint(epoch: int, total: int, every: int) -> bool:
    """Checkpoint on the cadence and always on the final epoch."""
    return epoch % every == 0 or epoch == total
