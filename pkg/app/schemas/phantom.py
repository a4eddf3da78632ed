"""
Pydantic schema for the synthetic phantom generator.
"""

import math

from pydantic import BaseModel, ConfigDict, Field, field_validator


class PhantomSpec(BaseModel):
    """Counts, geometry and per-modality signal strength of a phantom dataset.

    ``mri_snr`` and ``tvus_snr`` scale the class signal (fusion band amplitude,
    relative sliding distance in pixels) against Gaussian noise of std
    ``noise_std``.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_unlabeled: int = Field(default=200, ge=1)
    n_volumes: int = Field(default=40, ge=2)
    n_clips: int = Field(default=60, ge=2)
    positive_fraction: float = Field(default=0.25, gt=0.0, lt=1.0)
    mri_snr: float = Field(default=1.0, ge=0.0)
    tvus_snr: float = Field(default=3.0, ge=0.0)
    noise_std: float = Field(default=1.0, ge=0.0)
    volume_dims: tuple[int, int, int] = (72, 72, 36)
    volume_spacing: tuple[float, float, float] = (1.0, 1.0, 2.0)
    clip_dims: tuple[int, int, int] = (32, 32, 8)
    seed: int = 0

    @field_validator("volume_dims")
    @classmethod
    def validate_volume_dims(cls, v: tuple[int, int, int]) -> tuple[int, int, int]:
        if min(v) < 4:
            raise ValueError(f"volume_dims must be >= 4 on every axis, got {v}")
        return v

    @field_validator("clip_dims")
    @classmethod
    def validate_clip_dims(cls, v: tuple[int, int, int]) -> tuple[int, int, int]:
        if min(v[:2]) < 4 or v[2] < 2:
            raise ValueError(f"clip_dims needs frames >= 4x4 and T >= 2, got {v}")
        return v

    @field_validator("volume_spacing")
    @classmethod
    def validate_spacing(cls, v: tuple[float, float, float]) -> tuple[float, float, float]:
        if any(s <= 0 for s in v):
            raise ValueError(f"volume_spacing must be strictly positive, got {v}")
        return v

    def positive_count(self, n: int) -> int:
        """Exact number of positives among ``n`` generated samples.

        Rounded half up and kept within ``[1, n - 1]`` so that both classes
        are present.
        """
        count = math.floor(self.positive_fraction * n + 0.5)
        return min(max(count, 1), n - 1)
