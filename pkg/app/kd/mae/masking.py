"""
Random patch masking for MAE pre-training.
"""

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.exceptions import InvalidInputError


def masked_count(l_total: int, ratio: float) -> int:
    """Number of masked patches, ``ratio * l_total`` rounded half up."""
    return int(math.floor(ratio * l_total + 0.5))


class PatchMask(BaseModel):
    """Sorted, unique indices of the patches hidden from the encoder."""

    model_config = ConfigDict(frozen=True)

    masked_indices: tuple[int, ...]
    ratio: float = Field(..., ge=0.0, lt=1.0)
    l_total: int = Field(..., ge=1)

    @model_validator(mode="after")
    def validate_indices(self) -> "PatchMask":
        indices = self.masked_indices
        if len(set(indices)) != len(indices):
            raise InvalidInputError("Masked indices must be unique")
        if any(i < 0 or i >= self.l_total for i in indices):
            raise InvalidInputError(f"Masked indices out of range for L_total={self.l_total}")
        if list(indices) != sorted(indices):
            raise InvalidInputError("Masked indices must be sorted")
        if len(indices) != masked_count(self.l_total, self.ratio):
            raise InvalidInputError(
                f"Expected {masked_count(self.l_total, self.ratio)} masked indices, "
                f"got {len(indices)}"
            )
        return self

    @property
    def num_masked(self) -> int:
        """L, the masked-patch count."""
        return len(self.masked_indices)

    @property
    def visible_indices(self) -> tuple[int, ...]:
        """Sorted indices the encoder sees."""
        hidden = set(self.masked_indices)
        return tuple(i for i in range(self.l_total) if i not in hidden)

    @property
    def is_empty(self) -> bool:
        """True when no patch is masked."""
        return not self.masked_indices


def sample_mask(l_total: int, ratio: float, seed: int) -> PatchMask:
    """Draw a mask uniformly without replacement.

    Args:
        l_total: Number of patches
        ratio: Fraction to mask, in [0, 1)
        seed: RNG seed; equal seeds give equal masks

    Returns:
        Mask of exactly ``round(ratio * l_total)`` patches
    """
    if not 0.0 <= ratio < 1.0:
        raise InvalidInputError(f"Mask ratio must lie in [0, 1), got {ratio}")
    if l_total < 1:
        raise InvalidInputError(f"l_total must be >= 1, got {l_total}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(l_total, size=masked_count(l_total, ratio), replace=False)
    return PatchMask(
        masked_indices=tuple(sorted(int(i) for i in chosen)),
        ratio=ratio,
        l_total=l_total,
    )
