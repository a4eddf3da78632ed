"""
Pydantic schemas for volumes, clips, labels and probability outputs.
"""

from enum import Enum
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.exceptions import (
    InvalidClipError,
    InvalidInputError,
    InvalidProbabilityError,
    InvalidVolumeError,
)

SIMPLEX_TOLERANCE = 1e-6

Modality = Literal["mri", "tvus"]


class ClassLabel(str, Enum):
    """POD obliteration label. Index 0 is negative (normal), 1 is positive."""

    NEGATIVE = "negative"
    POSITIVE = "positive"

    @property
    def index(self) -> int:
        """Class index used by every classifier head and by AUC scoring."""
        return 1 if self is ClassLabel.POSITIVE else 0

    @classmethod
    def from_index(cls, index: int) -> "ClassLabel":
        """Inverse of :attr:`index`."""
        if index not in (0, 1):
            raise InvalidInputError(f"Class index must be 0 or 1, got {index}")
        return cls.POSITIVE if index == 1 else cls.NEGATIVE


def one_hot(label: ClassLabel) -> np.ndarray:
    """Encode a label as a one-hot 2-vector: negative (1,0), positive (0,1)."""
    vec = np.zeros(2, dtype=np.float64)
    vec[ClassLabel(label).index] = 1.0
    return vec


def decode_one_hot(vec: Sequence[float] | np.ndarray) -> ClassLabel:
    """Decode a one-hot 2-vector back to its label.

    Raises:
        InvalidInputError: If the vector is not one-hot
    """
    arr = np.asarray(vec, dtype=np.float64)
    if arr.shape != (2,) or not np.all(np.isin(arr, (0.0, 1.0))) or arr.sum() != 1.0:
        raise InvalidInputError(f"Not a one-hot 2-vector: {arr.tolist()}")
    return ClassLabel.from_index(int(arr.argmax()))


def _frozen_array(value: object, ndim: int, what: str, error: type[Exception]) -> np.ndarray:
    arr = np.array(value, dtype=np.float32, copy=True)
    if arr.ndim != ndim:
        raise error(f"{what} must be {ndim}D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise error(f"{what} contains non-finite values")
    arr.setflags(write=False)
    return arr


class Volume3D(BaseModel):
    """Single-channel 3D scalar grid with physical voxel spacing in mm."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    @field_validator("data", mode="before")
    @classmethod
    def validate_data(cls, v: object) -> np.ndarray:
        arr = _frozen_array(v, 3, "Volume data", InvalidVolumeError)
        if min(arr.shape) < 1:
            raise InvalidVolumeError(f"Volume dimensions must be >= 1, got {arr.shape}")
        return arr

    @field_validator("spacing")
    @classmethod
    def validate_spacing(cls, v: tuple[float, float, float]) -> tuple[float, float, float]:
        if any(s <= 0 or not np.isfinite(s) for s in v):
            raise InvalidVolumeError(f"Spacing must be strictly positive, got {v}")
        return tuple(float(s) for s in v)  # type: ignore[return-value]

    @property
    def shape(self) -> tuple[int, int, int]:
        """Grid dimensions (H, W, D)."""
        return tuple(int(s) for s in self.data.shape)  # type: ignore[return-value]

    @property
    def extent_mm(self) -> tuple[float, float, float]:
        """Physical extent per axis (dimension x spacing)."""
        return tuple(n * s for n, s in zip(self.shape, self.spacing))  # type: ignore[return-value]


class VideoClip(BaseModel):
    """Fixed-length sequence of 2D frames stored as H x W x T."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    frames: np.ndarray

    @field_validator("frames", mode="before")
    @classmethod
    def validate_frames(cls, v: object) -> np.ndarray:
        arr = _frozen_array(v, 3, "Clip frames", InvalidClipError)
        if arr.shape[2] < 2:
            raise InvalidClipError(f"A clip needs at least 2 frames, got {arr.shape[2]}")
        if min(arr.shape[:2]) < 1:
            raise InvalidClipError(f"Frame size must be >= 1, got {arr.shape[:2]}")
        return arr

    @property
    def num_frames(self) -> int:
        """Number of frames T."""
        return int(self.frames.shape[2])


class LabeledSample(BaseModel):
    """A volume or clip with its stable id and optional label."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sample_id: str = Field(..., min_length=1)
    modality: Modality
    data: Volume3D | VideoClip
    label: ClassLabel | None = None

    @property
    def one_hot(self) -> np.ndarray:
        """One-hot label vector."""
        if self.label is None:
            raise InvalidInputError(f"Sample {self.sample_id} is unlabeled")
        return one_hot(self.label)


class ProbOutput(BaseModel):
    """A point on the 2-class probability simplex."""

    model_config = ConfigDict(frozen=True)

    probs: tuple[float, float]

    @field_validator("probs")
    @classmethod
    def validate_simplex(cls, v: tuple[float, float]) -> tuple[float, float]:
        if any(not np.isfinite(p) or p < 0.0 or p > 1.0 for p in v):
            raise InvalidProbabilityError(f"Probabilities must lie in [0, 1], got {v}")
        total = v[0] + v[1]
        if abs(total - 1.0) > SIMPLEX_TOLERANCE:
            raise InvalidProbabilityError(
                f"Probabilities must sum to 1 within {SIMPLEX_TOLERANCE}, got {total}"
            )
        return v

    @property
    def positive(self) -> float:
        """Positive-class probability, the score used for ROC AUC."""
        return self.probs[1]

    @property
    def predicted(self) -> ClassLabel:
        """Arg-max label."""
        return ClassLabel.from_index(int(self.probs[1] > self.probs[0]))
