"""
Shared fixtures: miniature model configs, synthetic samples and a tiny
experiment config that trains every stage in seconds.
"""

from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pytest
import torch

from app.infrastructure.storage import CheckpointStore
from app.schemas.architecture import (
    DecoderConfig,
    EncoderConfig,
    StudentConfig,
    TeacherConfig,
)
from app.schemas.experiment import ExperimentConfig
from app.schemas.samples import ClassLabel, LabeledSample, VideoClip, Volume3D

NEG = ClassLabel.NEGATIVE
POS = ClassLabel.POSITIVE


@pytest.fixture(autouse=True)
def _torch_seed() -> None:
    torch.manual_seed(0)


@pytest.fixture
def tiny_encoder() -> EncoderConfig:
    """8^3 input, 4^3 patches (8 tokens)."""
    return EncoderConfig(
        input_dims=(8, 8, 8), patch_size=4, embed_dim=12, depth=1, num_heads=2, mlp_ratio=2.0
    )


@pytest.fixture
def tiny_decoder() -> DecoderConfig:
    return DecoderConfig(embed_dim=8, depth=1, num_heads=2, mlp_ratio=2.0)


@pytest.fixture
def tiny_teacher() -> TeacherConfig:
    return TeacherConfig(depth=10)


@pytest.fixture
def tiny_student(tiny_encoder: EncoderConfig) -> StudentConfig:
    return StudentConfig(encoder=tiny_encoder, adapter_out=16)


@pytest.fixture
def tiny_config(tiny_encoder: EncoderConfig, tiny_decoder: DecoderConfig) -> ExperimentConfig:
    """Every stage at toy size: 8^3 volumes, 8x8x4 clips, 3 folds."""
    return ExperimentConfig.model_validate(
        {
            "experiment": "tiny",
            "seed": 0,
            "data": {
                "min_slices": 4,
                "clahe": {"tile_grid": (2, 2, 2)},
                "clip_dims": (8, 8, 4),
            },
            "folds": {"k": 3},
            "mae": {
                "epochs": 2,
                "batch_size": 4,
                "checkpoint_every": 1,
                "encoder": tiny_encoder.model_dump(),
                "decoder": tiny_decoder.model_dump(),
            },
            "teacher": {
                "epochs": 2,
                "batch_size": 4,
                "lr": 1e-3,
                "checkpoint_every": 1,
                "network": {"depth": 10},
            },
            "finetune": {"epochs": 3, "batch_size": 4, "select_epoch": 2, "adapter_dim": 16},
            "distill": {"epochs": 2, "batch_size": 4},
            "synth": {
                "n_unlabeled": 8,
                "n_volumes": 12,
                "n_clips": 12,
                "positive_fraction": 0.5,
                "mri_snr": 3.0,
                "tvus_snr": 3.0,
                "volume_dims": (8, 8, 4),
                "clip_dims": (8, 8, 4),
            },
        }
    )


@pytest.fixture
def store(tmp_path: Path) -> CheckpointStore:
    return CheckpointStore(tmp_path / "checkpoints")


@pytest.fixture
def make_volumes() -> Callable[..., list[Volume3D]]:
    """Factory for random volumes."""

    def _make(n: int, dims: tuple[int, int, int] = (8, 8, 8), seed: int = 0) -> list[Volume3D]:
        rng = np.random.default_rng(seed)
        return [Volume3D(data=rng.random(dims)) for _ in range(n)]

    return _make


@pytest.fixture
def make_mri() -> Callable[..., list[LabeledSample]]:
    """Factory for labeled volumes whose class shifts the mean intensity."""

    def _make(
        labels: Sequence[ClassLabel], dims: tuple[int, int, int] = (8, 8, 8), seed: int = 0
    ) -> list[LabeledSample]:
        rng = np.random.default_rng(seed)
        return [
            LabeledSample(
                sample_id=f"mri-{i:04d}",
                modality="mri",
                data=Volume3D(data=rng.random(dims) + 0.5 * label.index),
                label=label,
            )
            for i, label in enumerate(labels)
        ]

    return _make


@pytest.fixture
def make_clips() -> Callable[..., list[LabeledSample]]:
    """Factory for labeled H x W x T clips."""

    def _make(
        labels: Sequence[ClassLabel], dims: tuple[int, int, int] = (8, 8, 4), seed: int = 0
    ) -> list[LabeledSample]:
        rng = np.random.default_rng(seed)
        return [
            LabeledSample(
                sample_id=f"tvus-{i:04d}",
                modality="tvus",
                data=VideoClip(frames=rng.standard_normal(dims) + label.index),
                label=label,
            )
            for i, label in enumerate(labels)
        ]

    return _make
