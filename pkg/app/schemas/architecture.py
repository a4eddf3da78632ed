"""
Pydantic schemas describing the encoder, decoder, teacher and student networks.
"""

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.exceptions import ConfigurationError

TEACHER_FEATURE_DIM = 512

_TEACHER_LAYOUTS: dict[int, tuple[int, int, int, int]] = {
    10: (1, 1, 1, 1),
    18: (2, 2, 2, 2),
    34: (3, 4, 6, 3),
}


class EncoderConfig(BaseModel):
    """3D ViT encoder geometry."""

    model_config = ConfigDict(frozen=True)

    input_dims: tuple[int, int, int] = (64, 64, 64)
    patch_size: int = Field(default=8, ge=1)
    embed_dim: int = Field(default=768, ge=1)
    depth: int = Field(default=12, ge=1)
    num_heads: int = Field(default=12, ge=1)
    mlp_ratio: float = Field(default=4.0, gt=0)
    pooling: Literal["mean", "cls"] = "mean"

    @model_validator(mode="after")
    def validate_geometry(self) -> "EncoderConfig":
        if self.embed_dim % self.num_heads:
            raise ConfigurationError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}"
            )
        if any(d % self.patch_size for d in self.input_dims):
            raise ConfigurationError(
                f"input_dims {self.input_dims} not divisible by patch_size {self.patch_size}"
            )
        return self

    @property
    def grid_dims(self) -> tuple[int, int, int]:
        """Patch-grid shape."""
        return tuple(d // self.patch_size for d in self.input_dims)  # type: ignore[return-value]

    @property
    def num_patches(self) -> int:
        """Total patch count L_total."""
        return math.prod(self.grid_dims)

    @property
    def patch_voxels(self) -> int:
        """Voxels per patch (patch_size cubed)."""
        return self.patch_size**3


class DecoderConfig(BaseModel):
    """MAE decoder, smaller than the encoder."""

    model_config = ConfigDict(frozen=True)

    embed_dim: int = Field(default=384, ge=1)
    depth: int = Field(default=4, ge=1)
    num_heads: int = Field(default=12, ge=1)
    mlp_ratio: float = Field(default=4.0, gt=0)

    @model_validator(mode="after")
    def validate_heads(self) -> "DecoderConfig":
        if self.embed_dim % self.num_heads:
            raise ConfigurationError(
                f"decoder embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}"
            )
        return self


class TeacherConfig(BaseModel):
    """R(2+1)D residual video network."""

    model_config = ConfigDict(frozen=True)

    depth: Literal[10, 18, 34] = 18
    in_channels: int = Field(default=1, ge=1)
    num_classes: Literal[2] = 2

    @property
    def layers(self) -> tuple[int, int, int, int]:
        """Residual blocks per stage."""
        return _TEACHER_LAYOUTS[self.depth]

    @property
    def feature_dim(self) -> int:
        """Width of the pooled feature fed to the classifier."""
        return TEACHER_FEATURE_DIM


class StudentConfig(BaseModel):
    """MAE encoder plus linear adapter and 2-way classifier."""

    model_config = ConfigDict(frozen=True)

    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    adapter_out: int = Field(default=TEACHER_FEATURE_DIM, ge=1)
    num_classes: Literal[2] = 2

    @property
    def adapter_in(self) -> int:
        """Adapter input width, the encoder embedding width."""
        return self.encoder.embed_dim
