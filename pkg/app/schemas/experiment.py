"""
Experiment configuration: every hyper-parameter of the four training stages,
fold bookkeeping and the ablation selector. Loaded from one YAML file.
"""

from enum import Enum
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.core.exceptions import (
    ConfigurationError,
    ConfigValidationError,
    PipelineError,
)
from app.core.reproducibility import config_hash
from app.schemas.architecture import (
    DecoderConfig,
    EncoderConfig,
    StudentConfig,
    TeacherConfig,
)
from app.schemas.checkpoint import Stage
from app.schemas.phantom import PhantomSpec

OptimizerName = Literal["adam", "adamw"]


class AblationRow(str, Enum):
    """MRI rows of the ablation table."""

    SCRATCH = "scratch"
    MAE_PT = "mae_pt"
    KD_ONLY = "kd_only"
    MAE_PT_KD = "mae_pt+kd"
    MAE_PT_KD_FT = "mae_pt+kd+ft"

    @property
    def uses_mae(self) -> bool:
        """Encoder initialised from the MAE checkpoint."""
        return self in (AblationRow.MAE_PT, AblationRow.MAE_PT_KD, AblationRow.MAE_PT_KD_FT)

    @property
    def uses_finetune(self) -> bool:
        """Cross-entropy fine-tuning stage runs."""
        return self in (AblationRow.SCRATCH, AblationRow.MAE_PT, AblationRow.MAE_PT_KD_FT)

    @property
    def uses_kd(self) -> bool:
        """Knowledge-distillation stage runs."""
        return self in (AblationRow.KD_ONLY, AblationRow.MAE_PT_KD, AblationRow.MAE_PT_KD_FT)

    @property
    def label(self) -> str:
        """Method label as printed in the results table."""
        return _ROW_LABELS[self]

    @property
    def training_modality(self) -> str:
        """Modalities seen during training."""
        return "MRI,TVUS" if self.uses_kd else "MRI"


_ROW_LABELS = {
    AblationRow.SCRATCH: "3D ViT",
    AblationRow.MAE_PT: "3D ViT: MAE PT",
    AblationRow.KD_ONLY: "3D ViT: KD",
    AblationRow.MAE_PT_KD: "3D ViT: MAE PT + KD",
    AblationRow.MAE_PT_KD_FT: "3D ViT: MAE PT + KD + FT",
}

TEACHER_ROW_LABEL = "ResNet(2+1)D"


class ClaheConfig(BaseModel):
    """3D CLAHE parameters.

    ``tile_grid`` counts tiles per axis of the resampled volume. Keep tiles at
    8 voxels or more per axis (a 64^3 volume takes at most an 8x8x8 grid);
    smaller tiles make repeated equalisation drift.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    enabled: bool = True
    clip_limit: float = Field(default=0.03, gt=0.0, le=1.0)
    tile_grid: tuple[int, int, int] = (8, 8, 8)
    nbins: int = Field(default=256, ge=2)


class DataConfig(BaseModel):
    """Where the datasets live and how samples are preprocessed."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    root: Path | None = None
    pretrain_manifest: str = "pretrain.csv"
    mri_manifest: str = "mri.csv"
    tvus_manifest: str = "tvus.csv"
    target_spacing_mm: float = Field(default=1.0, gt=0.0)
    min_slices: int = Field(default=65, ge=1)
    filter_labeled: bool = False
    clahe: ClaheConfig = Field(default_factory=ClaheConfig)
    crop_center_fraction: tuple[float, float, float] = (0.5, 0.5, 0.5)
    clip_dims: tuple[int, int, int] = (112, 112, 16)

    @model_validator(mode="after")
    def validate_center(self) -> "DataConfig":
        if any(not 0.0 < c <= 1.0 for c in self.crop_center_fraction):
            raise ConfigurationError(
                f"crop_center_fraction must lie in (0, 1], got {self.crop_center_fraction}"
            )
        if self.clip_dims[2] < 2:
            raise ConfigurationError("clip_dims needs at least 2 frames")
        return self


class FoldConfig(BaseModel):
    """Cross-validation layout."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    k: int = Field(default=5, ge=2)


class StageConfig(BaseModel):
    """Optimisation settings shared by every training stage."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(..., ge=1)
    batch_size: int = Field(..., ge=1)
    lr: float = Field(..., gt=0.0)
    optimizer: OptimizerName = "adamw"
    weight_decay: float = Field(default=0.01, ge=0.0)
    checkpoint_every: int = Field(default=1, ge=1)
    max_steps_per_epoch: int | None = Field(default=None, ge=1)


class MAEStageConfig(StageConfig):
    """Masked-autoencoder pre-training."""

    epochs: int = Field(default=200, ge=1)
    batch_size: int = Field(default=3, ge=1)
    lr: float = Field(default=1e-3, gt=0.0)
    weight_decay: float = Field(default=0.05, ge=0.0)
    checkpoint_every: int = Field(default=5, ge=1)
    mask_ratio: float = Field(default=0.5, gt=0.0, lt=1.0)
    per_voxel_loss: bool = True
    select_epoch: int | None = Field(default=None, ge=1)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    decoder: DecoderConfig = Field(default_factory=DecoderConfig)


class TeacherStageConfig(StageConfig):
    """R(2+1)D teacher training on clips."""

    epochs: int = Field(default=30, ge=1)
    batch_size: int = Field(default=30, ge=1)
    lr: float = Field(default=1e-5, gt=0.0)
    optimizer: OptimizerName = "adam"
    weight_decay: float = Field(default=0.0, ge=0.0)
    checkpoint_every: int = Field(default=10, ge=1)
    network: TeacherConfig = Field(default_factory=TeacherConfig)
    pretrained: str | None = None


class FinetuneStageConfig(StageConfig):
    """Cross-entropy fine-tuning of the student."""

    epochs: int = Field(default=25, ge=1)
    batch_size: int = Field(default=7, ge=1)
    lr: float = Field(default=1e-3, gt=0.0)
    adapter_dim: int = Field(default=512, ge=1)
    select_epoch: int = Field(default=10, ge=1)
    class_weighting: bool = False


class DistillStageConfig(StageConfig):
    """Label-matched distillation with the alpha^epoch schedule."""

    epochs: int = Field(default=10, ge=1)
    batch_size: int = Field(default=7, ge=1)
    lr: float = Field(default=1e-3, gt=0.0)
    alpha: float = Field(default=0.85, gt=0.0, lt=1.0)


_STAGE_SECTIONS: dict[Stage, tuple[str, ...]] = {
    Stage.MAE: ("seed", "data", "mae"),
    Stage.TEACHER: ("seed", "data", "folds", "teacher"),
    Stage.STUDENT_FT: ("seed", "data", "folds", "mae", "finetune"),
    Stage.DISTILLED: ("seed", "data", "folds", "mae", "teacher", "finetune", "distill"),
}


class ExperimentConfig(BaseModel):
    """Resolved configuration of one experiment."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    experiment: str = Field(..., min_length=1)
    seed: int = 0
    data: DataConfig = Field(default_factory=DataConfig)
    folds: FoldConfig = Field(default_factory=FoldConfig)
    mae: MAEStageConfig = Field(default_factory=MAEStageConfig)
    teacher: TeacherStageConfig = Field(default_factory=TeacherStageConfig)
    finetune: FinetuneStageConfig = Field(default_factory=FinetuneStageConfig)
    distill: DistillStageConfig = Field(default_factory=DistillStageConfig)
    ablation: AblationRow = AblationRow.MAE_PT_KD_FT
    synth: PhantomSpec = Field(default_factory=PhantomSpec)

    @property
    def student(self) -> StudentConfig:
        """Student network derived from the MAE encoder and adapter width."""
        return StudentConfig(encoder=self.mae.encoder, adapter_out=self.finetune.adapter_dim)

    def stage_hash(
        self,
        stage: Stage,
        fold: int | None = None,
        row: AblationRow | None = None,
    ) -> str:
        """Hash of exactly the sections that influence ``stage``.

        Args:
            stage: Stage whose inputs are hashed
            fold: Fold index for per-fold stages
            row: Ablation row for distilled or row-specific checkpoints

        Returns:
            Hex SHA-256 digest
        """
        dumped = self.model_dump(mode="json", exclude={"data": {"root"}})
        payload: dict[str, Any] = {key: dumped[key] for key in _STAGE_SECTIONS[stage]}
        payload["stage"] = stage.value
        payload["fold"] = fold
        payload["row"] = row.value if row is not None else None
        return config_hash(payload)

    def with_overrides(self, **updates: Any) -> "ExperimentConfig":
        """Return a validated copy with top-level fields replaced."""
        merged = self.model_dump(mode="json")
        merged.update({k: v for k, v in updates.items() if v is not None})
        return ExperimentConfig.model_validate(merged)

    def to_yaml(self) -> str:
        """Serialize the resolved config."""
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)

    @classmethod
    def from_yaml(cls, path: Path) -> "ExperimentConfig":
        """Load and validate a YAML config with line-level diagnostics.

        Args:
            path: Config file

        Returns:
            Validated config

        Raises:
            ConfigValidationError: On syntax errors, unknown or missing keys and
                invalid values; ``details`` holds ``key`` and ``line``.
        """
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"Cannot read config {path}: {e}") from e
        return cls.from_yaml_text(text, source=str(path))

    @classmethod
    def from_yaml_text(cls, text: str, source: str = "<string>") -> "ExperimentConfig":
        """Validate config text; see :meth:`from_yaml`."""
        try:
            raw = yaml.safe_load(text)
            root = yaml.compose(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            line = mark.line + 1 if mark is not None else None
            raise ConfigValidationError(
                f"{source}:{line}: invalid YAML: {getattr(e, 'problem', e)}",
                details={"line": line, "key": None},
            ) from e
        if not isinstance(raw, dict):
            raise ConfigValidationError(
                f"{source}: config must be a mapping", details={"line": 1, "key": None}
            )

        try:
            return cls.model_validate(raw)
        except ValidationError as e:
            first = e.errors()[0]
            loc = tuple(str(part) for part in first["loc"])
            key = ".".join(loc)
            line = _locate_line(root, loc)
            if first["type"] == "missing":
                message = f"{source}:{line}: missing required key '{key}'"
            else:
                message = f"{source}:{line}: invalid value for '{key}': {first['msg']}"
            raise ConfigValidationError(
                message, details={"key": key, "line": line, "errors": e.error_count()}
            ) from e
        except PipelineError as e:
            raise ConfigValidationError(
                f"{source}: {e.message}", details={"key": None, "line": None}
            ) from e


def _locate_line(root: yaml.Node | None, loc: tuple[str, ...]) -> int | None:
    """1-based line of the deepest key in ``loc`` present in the YAML tree."""
    node = root
    line = root.start_mark.line + 1 if root is not None else None
    for part in loc:
        if not isinstance(node, yaml.MappingNode):
            break
        for key_node, value_node in node.value:
            if key_node.value == part:
                line = key_node.start_mark.line + 1
                node = value_node
                break
        else:
            break
    return line
