"""
Lossless cube-patch rearrangement of volumes, for arrays and batched tensors.
"""

import math

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from app.core.exceptions import ShapeMismatchError
from app.schemas.samples import Volume3D


class PatchSequence(BaseModel):
    """Row-major sequence of flattened ``patch_size``-cubes.

    ``patches[l]`` holds grid cell ``l`` in C order over ``grid_dims``; each
    row is the cube flattened in C order.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    patches: np.ndarray
    grid_dims: tuple[int, int, int]
    patch_size: int
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    @field_validator("patches", mode="before")
    @classmethod
    def validate_patches(cls, v: object) -> np.ndarray:
        arr = np.array(v, copy=True)
        if arr.ndim != 2:
            raise ShapeMismatchError(f"Patches must be 2D (L, voxels), got {arr.shape}")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def validate_counts(self) -> "PatchSequence":
        expected = (math.prod(self.grid_dims), self.patch_size**3)
        if tuple(self.patches.shape) != expected:
            raise ShapeMismatchError(
                f"Patch array shape {self.patches.shape} does not match {expected}"
            )
        return self

    @property
    def num_patches(self) -> int:
        """L_total."""
        return int(self.patches.shape[0])


def _check_divisible(dims: tuple[int, ...], patch_size: int) -> None:
    if patch_size < 1 or any(d % patch_size for d in dims):
        raise ShapeMismatchError(
            f"Volume dims {dims} are not divisible by patch size {patch_size}"
        )


def patchify(vol: Volume3D, patch_size: int) -> PatchSequence:
    """Cut a volume into non-overlapping cubes.

    Raises:
        ShapeMismatchError: If a dimension is not divisible by ``patch_size``
    """
    _check_divisible(vol.shape, patch_size)
    p = patch_size
    h, w, d = vol.shape
    grid = (h // p, w // p, d // p)
    blocks = vol.data.reshape(grid[0], p, grid[1], p, grid[2], p)
    blocks = blocks.transpose(0, 2, 4, 1, 3, 5).reshape(math.prod(grid), p**3)
    return PatchSequence(patches=blocks, grid_dims=grid, patch_size=p, spacing=vol.spacing)


def unpatchify(seq: PatchSequence) -> Volume3D:
    """Inverse of :func:`patchify`."""
    p = seq.patch_size
    g0, g1, g2 = seq.grid_dims
    data = seq.patches.reshape(g0, g1, g2, p, p, p).transpose(0, 3, 1, 4, 2, 5)
    return Volume3D(data=data.reshape(g0 * p, g1 * p, g2 * p), spacing=seq.spacing)


def patchify_tensor(x: torch.Tensor, patch_size: int) -> torch.Tensor:
    """Batched patchify: (B, 1, H, W, D) -> (B, L, p^3), same ordering as :func:`patchify`."""
    if x.ndim != 5 or x.shape[1] != 1:
        raise ShapeMismatchError(f"Expected (B, 1, H, W, D), got {tuple(x.shape)}")
    _check_divisible(tuple(x.shape[2:]), patch_size)
    p = patch_size
    b, _, h, w, d = x.shape
    x = x.reshape(b, h // p, p, w // p, p, d // p, p)
    x = x.permute(0, 1, 3, 5, 2, 4, 6)
    return x.reshape(b, (h // p) * (w // p) * (d // p), p**3)


def unpatchify_tensor(
    patches: torch.Tensor, grid_dims: tuple[int, int, int], patch_size: int
) -> torch.Tensor:
    """Batched inverse: (B, L, p^3) -> (B, 1, H, W, D)."""
    p = patch_size
    g0, g1, g2 = grid_dims
    b = patches.shape[0]
    x = patches.reshape(b, g0, g1, g2, p, p, p).permute(0, 1, 4, 2, 5, 3, 6)
    return x.reshape(b, 1, g0 * p, g1 * p, g2 * p)
