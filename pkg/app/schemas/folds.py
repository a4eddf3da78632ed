"""
Pydantic schema for persisted cross-validation fold assignments.
"""

from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.exceptions import InvalidInputError
from app.schemas.samples import ClassLabel


class FoldSplit(BaseModel):
    """Mapping from sample id to fold index in ``{0..k-1}``."""

    model_config = ConfigDict(frozen=True)

    k: int = Field(..., ge=2)
    seed: int = 0
    fold_assignments: dict[str, int]

    @model_validator(mode="after")
    def validate_assignments(self) -> "FoldSplit":
        bad = {sid: f for sid, f in self.fold_assignments.items() if not 0 <= f < self.k}
        if bad:
            raise InvalidInputError(
                f"Fold indices out of range for k={self.k}", details={"samples": bad}
            )
        return self

    def held_out_ids(self, fold: int) -> list[str]:
        """Sample ids held out in ``fold``."""
        self._check_fold(fold)
        return sorted(sid for sid, f in self.fold_assignments.items() if f == fold)

    def train_ids(self, fold: int) -> list[str]:
        """Sample ids of every other fold."""
        self._check_fold(fold)
        return sorted(sid for sid, f in self.fold_assignments.items() if f != fold)

    def fold_sizes(self) -> list[int]:
        """Number of samples per fold."""
        sizes = [0] * self.k
        for f in self.fold_assignments.values():
            sizes[f] += 1
        return sizes

    def positives_per_fold(self, labels: dict[str, ClassLabel]) -> list[int]:
        """Count positives per fold given the id -> label mapping."""
        counts = [0] * self.k
        for sid, f in self.fold_assignments.items():
            if labels[sid] is ClassLabel.POSITIVE:
                counts[f] += 1
        return counts

    def save(self, path: Path) -> None:
        """Persist as JSON."""
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "FoldSplit":
        """Load a persisted split."""
        return cls.model_validate_json(path.read_text(encoding="utf-8"))

    def _check_fold(self, fold: int) -> None:
        if not 0 <= fold < self.k:
            raise InvalidInputError(f"Fold {fold} out of range for k={self.k}")
