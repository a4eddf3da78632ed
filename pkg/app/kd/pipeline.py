"""
Pipeline orchestrator: runs the stages of one experiment inside a run
directory and reuses every checkpoint whose manifest hash still matches.

Run directory layout::

    <run_dir>/
        resolved_config.yaml
        run_info.json
        logs/run.jsonl
        data/                      phantom datasets written by ``synth``
        folds_mri.json
        folds_tvus.json
        checkpoints/<stage>/<scope>/epoch_XXXX/
        results.csv, predictions.csv, table.txt, table.csv, roc/
"""

import json
import shutil
from functools import partial
from pathlib import Path
from typing import Callable, Sequence

from app.core.exceptions import (
    CheckpointNotFoundError,
    ConfigurationError,
    DataError,
    ManifestError,
    StaleArtifactError,
)
from app.core.logging import bind_run_context, configure_logging, get_logger
from app.core.reproducibility import (
    derive_seed,
    run_identifiers,
    seed_everything,
)
from app.infrastructure.storage import CheckpointStore, require_fresh
from app.kd.distill.trainer import distill_train
from app.kd.evaluation.cross_validation import FoldPredictions, RowResult, cross_validate
from app.kd.evaluation.report import report, write_results
from app.kd.ingestion.loader import DatasetLoader
from app.kd.ingestion.manifest import read_manifest
from app.kd.ingestion.preprocessing import preprocess_volume, resize_clip, standardize_clip
from app.kd.ingestion.splits import stratified_kfold
from app.kd.mae.trainer import pretrain_mae
from app.kd.student.model import build_student, load_student
from app.kd.student.trainer import finetune_student, predict_volumes
from app.kd.synthdata import DatasetManifests, gen_datasets, write_datasets
from app.kd.teacher.trainer import load_teacher, predict_clips, train_teacher
from app.schemas.checkpoint import Checkpoint, Stage
from app.schemas.experiment import TEACHER_ROW_LABEL, AblationRow, ExperimentConfig
from app.schemas.folds import FoldSplit
from app.schemas.samples import LabeledSample, Modality, Volume3D

logger = get_logger(__name__)

CHECKPOINT_DIR = "checkpoints"
DATA_DIR = "data"
RESOLVED_CONFIG_FILE = "resolved_config.yaml"
RUN_INFO_FILE = "run_info.json"
RUN_LOG_FILE = Path("logs") / "run.jsonl"

MATRIX_ROWS: tuple[AblationRow, ...] = tuple(AblationRow)

_STAGE_COMMANDS = {
    Stage.MAE: "podkd pretrain-mae",
    Stage.TEACHER: "podkd train-teacher",
    Stage.STUDENT_FT: "podkd finetune",
    Stage.DISTILLED: "podkd distill",
}


def fold_scope(fold: int, prefix: str | None = None) -> str:
    """Checkpoint sub-directory of a per-fold stage run."""
    return f"{prefix}/fold_{fold}" if prefix else f"fold_{fold}"


class DistillationPipeline:
    """Runs and reuses the stages of one experiment.

    Standalone stage commands refuse missing or stale upstream checkpoints;
    ``evaluate`` builds what is missing but still refuses stale artifacts
    unless ``force`` is set.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        run_dir: Path,
        force: bool = False,
        jobs: int = 1,
    ):
        """Initialize pipeline.

        Args:
            config: Resolved experiment config
            run_dir: Run directory
            force: Accept upstream checkpoints with a stale config hash
            jobs: Worker processes for fold-level parallelism
        """
        self.config = config
        self.run_dir = run_dir
        self.force = force
        self.jobs = max(1, jobs)
        self.store = CheckpointStore(run_dir / CHECKPOINT_DIR)
        self.loader = DatasetLoader()
        self._pretrain: list[Volume3D] | None = None
        self._mri: list[LabeledSample] | None = None
        self._tvus: list[LabeledSample] | None = None
        self._folds: dict[Modality, FoldSplit] = {}

    # ------------------------------------------------------------------
    # Run directory
    # ------------------------------------------------------------------

    @property
    def data_root(self) -> Path:
        """Dataset directory: ``data.root`` or ``<run_dir>/data``."""
        return self.config.data.root or self.run_dir / DATA_DIR

    def prepare_run_dir(self) -> None:
        """Write the resolved config and build identifiers, bind log context."""
        self.run_dir.mkdir(parents=True, exist_ok=True)
        config_path = self.run_dir / RESOLVED_CONFIG_FILE
        resolved = self.config.to_yaml()
        if config_path.is_file() and config_path.read_text(encoding="utf-8") != resolved:
            logger.info("resolved_config_changed", path=str(config_path))
        config_path.write_text(resolved, encoding="utf-8")

        run_info = {
            "experiment": self.config.experiment,
            "seed": self.config.seed,
            "seeds": {
                "mae": derive_seed(self.config.seed, "mae", "init"),
                "folds_mri": derive_seed(self.config.seed, "folds", "mri"),
                "folds_tvus": derive_seed(self.config.seed, "folds", "tvus"),
                "phantom": self.config.synth.seed,
            },
            "stage_hashes": {
                stage.value: self.config.stage_hash(stage) for stage in Stage
            },
            **run_identifiers(),
        }
        (self.run_dir / RUN_INFO_FILE).write_text(
            json.dumps(run_info, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        bind_run_context(run_id=self.run_dir.name, experiment=self.config.experiment)

    # ------------------------------------------------------------------
    # Data
    # ------------------------------------------------------------------

    def synthesize(self) -> DatasetManifests:
        """Generate phantom datasets into the data directory."""
        datasets = gen_datasets(self.config.synth)
        data_cfg = self.config.data
        return write_datasets(
            datasets,
            self.data_root,
            (data_cfg.pretrain_manifest, data_cfg.mri_manifest, data_cfg.tvus_manifest),
        )

    def _manifest(self, name: str) -> Path:
        path = self.data_root / name
        if not path.is_file():
            raise ManifestError(
                f"Dataset manifest {path} not found; run `podkd synth` or set data.root",
                details={"path": str(path)},
            )
        return path

    def pretrain_volumes(self) -> list[Volume3D]:
        """Preprocessed unlabeled volumes, short volumes filtered out."""
        if self._pretrain is None:
            entries = read_manifest(self._manifest(self.config.data.pretrain_manifest))
            volumes = []
            for entry in entries:
                raw = self.loader.load(entry.path)
                processed = preprocess_volume(
                    raw, self.config.data, self.config.mae.encoder.input_dims, apply_filter=True
                )
                if processed is not None:
                    volumes.append(processed)
            if not volumes:
                raise DataError("Every pre-training volume was filtered out")
            logger.info("pretrain_data_loaded", n_volumes=len(volumes), n_listed=len(entries))
            self._pretrain = volumes
        return self._pretrain

    def mri_samples(self) -> list[LabeledSample]:
        """Preprocessed labeled volumes."""
        if self._mri is None:
            entries = read_manifest(self._manifest(self.config.data.mri_manifest))
            samples = []
            for entry in entries:
                if entry.label is None:
                    raise DataError(f"MRI sample {entry.sample_id} has no label")
                processed = preprocess_volume(
                    self.loader.load(entry.path),
                    self.config.data,
                    self.config.mae.encoder.input_dims,
                    apply_filter=self.config.data.filter_labeled,
                )
                if processed is not None:
                    samples.append(
                        LabeledSample(
                            sample_id=entry.sample_id,
                            modality="mri",
                            data=processed,
                            label=entry.label,
                        )
                    )
            logger.info("mri_data_loaded", n_volumes=len(samples), n_listed=len(entries))
            self._mri = samples
        return self._mri

    def tvus_samples(self) -> list[LabeledSample]:
        """Labeled clips resized to ``data.clip_dims`` and standardised."""
        if self._tvus is None:
            entries = read_manifest(self._manifest(self.config.data.tvus_manifest))
            samples = []
            for entry in entries:
                if entry.label is None:
                    raise DataError(f"TVUS sample {entry.sample_id} has no label")
                clip = resize_clip(self.loader.load(entry.path), self.config.data.clip_dims)
                samples.append(
                    LabeledSample(
                        sample_id=entry.sample_id,
                        modality="tvus",
                        data=standardize_clip(clip),
                        label=entry.label,
                    )
                )
            logger.info("tvus_data_loaded", n_clips=len(samples))
            self._tvus = samples
        return self._tvus

    def folds(self, modality: Modality) -> FoldSplit:
        """Persisted stratified folds of one labeled set, created on first use.

        Raises:
            StaleArtifactError: If the persisted split covers other samples
                and ``force`` is not set
        """
        if modality in self._folds:
            return self._folds[modality]

        samples = self.mri_samples() if modality == "mri" else self.tvus_samples()
        ids = [s.sample_id for s in samples]
        path = self.run_dir / f"folds_{modality}.json"
        split: FoldSplit | None = None
        if path.is_file():
            split = FoldSplit.load(path)
            if sorted(split.fold_assignments) != sorted(ids) or split.k != self.config.folds.k:
                if not self.force:
                    raise StaleArtifactError(
                        f"{path} was built for other samples or k; delete it or pass --force",
                        details={"path": str(path)},
                    )
                logger.warning("folds_rebuilt", modality=modality, path=str(path))
                split = None

        if split is None:
            split = stratified_kfold(
                [s.label for s in samples],  # type: ignore[misc]
                k=self.config.folds.k,
                seed=derive_seed(self.config.seed, "folds", modality),
                sample_ids=ids,
            )
            split.save(path)
        self._folds[modality] = split
        return split

    def _subset(self, samples: Sequence[LabeledSample], ids: Sequence[str]) -> list[LabeledSample]:
        wanted = set(ids)
        return [s for s in samples if s.sample_id in wanted]

    def fold_indices(self, fold: int | None) -> list[int]:
        """Every fold, or just ``fold``."""
        k = self.config.folds.k
        if fold is None:
            return list(range(k))
        if not 0 <= fold < k:
            raise ConfigurationError(f"--fold {fold} out of range for k={k}")
        return [fold]

    # ------------------------------------------------------------------
    # Checkpoint reuse
    # ------------------------------------------------------------------

    def _complete(
        self, stage: Stage, scope: str | None, expected_hash: str, final_epoch: int
    ) -> Checkpoint | None:
        """Latest checkpoint when it was produced by this config and finished."""
        if not self.store.epochs(stage, scope):
            return None
        latest = self.store.latest(stage, scope)
        if latest.manifest.config_hash == expected_hash and latest.manifest.epoch == final_epoch:
            return latest
        return None

    def _run_stage(
        self,
        stage: Stage,
        scope: str | None,
        expected_hash: str,
        final_epoch: int,
        train: Callable[[], object],
    ) -> Checkpoint:
        """Reuse a finished matching run, otherwise clear the run dir and train."""
        reused = self._complete(stage, scope, expected_hash, final_epoch)
        if reused is not None:
            logger.info("stage_reused", stage=stage.value, scope=scope, path=str(reused.path))
            return reused
        stage_dir = self.store.stage_dir(stage, scope)
        if stage_dir.exists():
            logger.info("stage_retrained", stage=stage.value, scope=scope)
            shutil.rmtree(stage_dir)
        bind_run_context(stage=stage.value, scope=scope)
        train()
        return self.store.latest(stage, scope)

    def _upstream(
        self,
        stage: Stage,
        scope: str | None,
        expected_hash: str,
        final_epoch: int,
        build: bool,
        builder: Callable[[], Checkpoint],
    ) -> None:
        """Make sure an upstream stage run exists and matches the config.

        When ``build`` is set, missing or unfinished runs are (re)trained.

        Raises:
            CheckpointNotFoundError: If missing and ``build`` is False
            StaleArtifactError: If stale and ``force`` is False
        """
        if not self.store.epochs(stage, scope):
            if not build:
                raise CheckpointNotFoundError(
                    f"No {stage.value} checkpoint under {self.store.stage_dir(stage, scope)}; "
                    f"run `{_STAGE_COMMANDS[stage]}` first",
                    details={"stage": stage.value, "scope": scope},
                )
            builder()
            return
        latest = self.store.latest(stage, scope)
        require_fresh(latest, expected_hash, self.force)
        if build and latest.manifest.epoch != final_epoch:
            builder()

    # ------------------------------------------------------------------
    # Stages
    # ------------------------------------------------------------------

    def pretrain_mae(self) -> Checkpoint:
        """MAE pre-training on the unlabeled pool."""
        expected = self.config.stage_hash(Stage.MAE)
        return self._run_stage(
            Stage.MAE,
            None,
            expected,
            self.config.mae.epochs,
            lambda: pretrain_mae(self.pretrain_volumes(), self.config, self.store, expected),
        )

    def mae_checkpoint(self, build: bool = False) -> Checkpoint:
        """MAE checkpoint at ``mae.select_epoch`` (default: last)."""
        expected = self.config.stage_hash(Stage.MAE)
        self._upstream(Stage.MAE, None, expected, self.config.mae.epochs, build, self.pretrain_mae)
        return self.store.select(Stage.MAE, None, self.config.mae.select_epoch)

    def train_teacher(self, fold: int) -> Checkpoint:
        """Teacher trained on every TVUS fold but ``fold``."""
        split = self.folds("tvus")
        clips = self._subset(self.tvus_samples(), split.train_ids(fold))
        expected = self.config.stage_hash(Stage.TEACHER, fold)
        scope = fold_scope(fold)
        return self._run_stage(
            Stage.TEACHER,
            scope,
            expected,
            self.config.teacher.epochs,
            lambda: train_teacher(clips, self.config, self.store, fold, scope, expected),
        )

    def teacher_checkpoint(self, fold: int, build: bool = False) -> Checkpoint:
        """Finished teacher of ``fold``."""
        scope = fold_scope(fold)
        expected = self.config.stage_hash(Stage.TEACHER, fold)
        self._upstream(
            Stage.TEACHER,
            scope,
            expected,
            self.config.teacher.epochs,
            build,
            partial(self.train_teacher, fold),
        )
        return self.store.latest(Stage.TEACHER, scope)

    @staticmethod
    def _finetune_row(use_mae: bool) -> AblationRow:
        return AblationRow.MAE_PT if use_mae else AblationRow.SCRATCH

    def finetune(self, fold: int, use_mae: bool, build_upstream: bool = False) -> Checkpoint:
        """Cross-entropy fine-tuning from an MAE or random encoder."""
        row = self._finetune_row(use_mae)
        init = "mae" if use_mae else "random"
        scope = fold_scope(fold, init)
        expected = self.config.stage_hash(Stage.STUDENT_FT, fold, row)
        mae = self.mae_checkpoint(build_upstream) if use_mae else None
        volumes = self._subset(self.mri_samples(), self.folds("mri").train_ids(fold))

        def train() -> None:
            seed_everything(derive_seed(self.config.seed, "finetune", "init", init, fold))
            model = build_student(mae, self.config.student)
            finetune_student(volumes, model, self.config, self.store, fold, scope, expected)

        return self._run_stage(Stage.STUDENT_FT, scope, expected, self.config.finetune.epochs, train)

    def finetune_checkpoint(
        self, fold: int, use_mae: bool, build: bool = False, epoch: int | None = None
    ) -> Checkpoint:
        """Fine-tuned student of ``fold`` at ``epoch`` (default: last)."""
        row = self._finetune_row(use_mae)
        scope = fold_scope(fold, "mae" if use_mae else "random")
        expected = self.config.stage_hash(Stage.STUDENT_FT, fold, row)
        self._upstream(
            Stage.STUDENT_FT,
            scope,
            expected,
            self.config.finetune.epochs,
            build,
            partial(self.finetune, fold, use_mae, build),
        )
        return self.store.select(Stage.STUDENT_FT, scope, epoch)

    def distill(self, fold: int, row: AblationRow, build_upstream: bool = False) -> Checkpoint:
        """Distil the fold teacher into the student initialisation of ``row``.

        The volumes are the MRI training folds of ``fold``; the matching pool
        is the TVUS training folds of the same fold index.

        Raises:
            ConfigurationError: If ``row`` has no distillation stage
        """
        if not row.uses_kd:
            raise ConfigurationError(f"Ablation row '{row.value}' has no distillation stage")
        teacher = self.teacher_checkpoint(fold, build_upstream)
        if row is AblationRow.MAE_PT_KD_FT:
            student_init: Checkpoint | None = self.finetune_checkpoint(
                fold, True, build_upstream, self.config.finetune.select_epoch
            )
        elif row.uses_mae:
            student_init = self.mae_checkpoint(build_upstream)
        else:
            student_init = None

        mri = self._subset(self.mri_samples(), self.folds("mri").train_ids(fold))
        pool = self._subset(self.tvus_samples(), self.folds("tvus").train_ids(fold))
        scope = fold_scope(fold, row.value)
        expected = self.config.stage_hash(Stage.DISTILLED, fold, row)
        return self._run_stage(
            Stage.DISTILLED,
            scope,
            expected,
            self.config.distill.epochs,
            lambda: distill_train(
                mri, pool, teacher, student_init, self.config, self.store, fold, scope, row, expected
            ),
        )

    # ------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------

    def evaluate_fold(self, method: str, fold: int) -> FoldPredictions:
        """Build what ``method`` needs for ``fold`` and score the held-out fold."""
        bind_run_context(method=method, fold=fold)
        if method == TEACHER_ROW_LABEL:
            checkpoint = self.teacher_checkpoint(fold, build=True)
            held_out = self._subset(self.tvus_samples(), self.folds("tvus").held_out_ids(fold))
            probs = predict_clips(load_teacher(checkpoint), [s.data for s in held_out])  # type: ignore[misc]
        else:
            row = AblationRow(method)
            if row.uses_kd:
                checkpoint = self.distill(fold, row, build_upstream=True)
            else:
                checkpoint = self.finetune(fold, row.uses_mae, build_upstream=True)
            held_out = self._subset(self.mri_samples(), self.folds("mri").held_out_ids(fold))
            probs = predict_volumes(load_student(checkpoint), [s.data for s in held_out])  # type: ignore[misc]

        return FoldPredictions(
            fold=fold,
            sample_ids=[s.sample_id for s in held_out],
            labels=[s.label for s in held_out],  # type: ignore[misc]
            scores=[p.positive for p in probs],
            config_hash=checkpoint.manifest.config_hash,
        )

    def evaluate(
        self,
        rows: Sequence[AblationRow] | None = None,
        include_teacher: bool = False,
        fold: int | None = None,
    ) -> list[RowResult]:
        """Cross-validate rows and merge them into the results files.

        Args:
            rows: Ablation rows; defaults to ``config.ablation``
            include_teacher: Also score the clip teacher row
            fold: Restrict to one fold

        Returns:
            One result per evaluated method, teacher first
        """
        rows = list(rows) if rows is not None else [self.config.ablation]
        folds = self.fold_indices(fold)
        self.folds("mri")
        self.folds("tvus")
        if self.jobs > 1 and any(r.uses_mae for r in rows):
            self.mae_checkpoint(build=True)

        methods: list[tuple[str, str, str]] = []
        if include_teacher:
            methods.append((TEACHER_ROW_LABEL, "TVUS", "TVUS"))
        methods.extend((row.value, row.training_modality, "MRI") for row in rows)

        results = []
        for key, training, testing in methods:
            label = key if key == TEACHER_ROW_LABEL else AblationRow(key).label
            logger.info("method_evaluation_started", method=label, folds=folds, jobs=self.jobs)
            if self.jobs > 1:
                evaluate_fold: Callable[[int], FoldPredictions] = partial(
                    _evaluate_fold_in_worker, self.config, self.run_dir, self.force, key
                )
            else:
                evaluate_fold = partial(self.evaluate_fold, key)
            results.append(
                cross_validate(
                    label,
                    evaluate_fold,
                    folds,
                    self.config.seed,
                    training_modality=training,
                    testing_modality=testing,
                    jobs=self.jobs,
                )
            )
        write_results(results, self.run_dir)
        return results

    def report(self) -> Path:
        """Render the table and ROC plots of this run."""
        return report(self.run_dir)


def _evaluate_fold_in_worker(
    config: ExperimentConfig, run_dir: Path, force: bool, method: str, fold: int
) -> FoldPredictions:
    """Process-pool entry point: one fresh pipeline per fold."""
    configure_logging(run_dir / RUN_LOG_FILE)
    pipeline = DistillationPipeline(config, run_dir, force=force, jobs=1)
    return pipeline.evaluate_fold(method, fold)
