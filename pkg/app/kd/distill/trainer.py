"""
Distillation stage: label-matched pairs, frozen teacher targets and the
scheduled KD/CE objective.
"""

from typing import Sequence

import torch
import torch.nn.functional as F
from tqdm import tqdm

from app.core.config import settings
from app.core.exceptions import TrainingError
from app.core.logging import get_logger
from app.core.reproducibility import derive_seed, seed_everything
from app.infrastructure.storage import CheckpointStore, require_stage
from app.kd.distill.losses import KDSchedule, combined_loss, kd_loss
from app.kd.distill.pairing import pair_by_label
from app.kd.student.model import (
    StudentClassifier,
    build_student,
    load_student,
    student_architecture,
)
from app.kd.teacher.freeze import FrozenTeacher, freeze
from app.kd.training import (
    EpochRecord,
    TrainingResult,
    build_optimizer,
    current_lr,
    device,
    ensure_finite,
    epoch_batches,
    inverse_frequency_weights,
    label_tensor,
    make_loader,
    require_both_classes,
    sample_tensor,
    should_checkpoint,
)
from app.schemas.checkpoint import Checkpoint, Stage
from app.schemas.experiment import AblationRow, ExperimentConfig
from app.schemas.samples import LabeledSample

logger = get_logger(__name__)


def init_student(
    student_init: Checkpoint | None, config: ExperimentConfig, seed: int
) -> StudentClassifier:
    """Student for distillation from a random, MAE or fine-tuned start.

    Raises:
        StageMismatchError: If the checkpoint is neither MAE nor student_ft
    """
    seed_everything(seed)
    if student_init is None:
        return build_student(None, config.student)
    require_stage(student_init, Stage.MAE, Stage.STUDENT_FT)
    if student_init.stage is Stage.MAE:
        return build_student(student_init, config.student)
    return load_student(student_init).train()


def distill_train(
    mri: Sequence[LabeledSample],
    tvus_pool: Sequence[LabeledSample],
    teacher: Checkpoint | FrozenTeacher,
    student_init: Checkpoint | None,
    config: ExperimentConfig,
    store: CheckpointStore,
    fold: int | None = None,
    scope: str | None = None,
    row: AblationRow | None = None,
    config_hash: str | None = None,
) -> TrainingResult:
    """Distil the frozen clip teacher into the volume student.

    Every epoch re-pairs each volume with a same-label clip, then minimises
    ``a^e * L1(teacher, student) + (1 - a^e) * CE`` over the volumes.

    Args:
        mri: Labeled, preprocessed volumes
        tvus_pool: Labeled clips to pair from
        teacher: Teacher checkpoint or an already frozen handle
        student_init: MAE or student_ft checkpoint, or None for random init
        config: Experiment config; the ``distill`` section drives training
        store: Checkpoint destination
        fold: Held-out fold, if any
        scope: Checkpoint sub-directory
        row: Ablation row being trained, recorded in logs
        config_hash: Hash written into manifests

    Returns:
        Last checkpoint; history metrics hold ``kd_weight``, ``kd_loss`` and
        ``ce_loss`` per epoch

    Raises:
        MissingLabelPoolError: If the pool lacks a label present in ``mri``
        FreezeViolationError: If the teacher changed during the stage
        TrainingDivergedError: On a non-finite loss
    """
    require_both_classes(mri, "Distillation set")
    stage_cfg = config.distill
    config_hash = config_hash or config.stage_hash(Stage.DISTILLED, fold, row)
    seed = config.seed
    fold_key = fold if fold is not None else -1
    schedule = KDSchedule(alpha=stage_cfg.alpha)

    frozen = teacher if isinstance(teacher, FrozenTeacher) else freeze(teacher)
    digest_before = frozen.digest

    # Fails fast on a missing label before any teacher inference.
    pair_by_label(mri, tvus_pool, derive_seed(seed, "distill", "pairs", fold_key), 1)
    pool_probs = frozen.predict_proba(sample_tensor(tvus_pool)).float()
    pool_index = {clip.sample_id: i for i, clip in enumerate(tvus_pool)}

    student = init_student(student_init, config, derive_seed(seed, "distill", "init", fold_key))
    student.to(device())
    optimizer = build_optimizer(student, stage_cfg)

    inputs = sample_tensor(mri)
    targets = label_tensor(mri)
    weight = (
        inverse_frequency_weights(targets).to(device())
        if config.finetune.class_weighting
        else None
    )

    logger.info(
        "distillation_started",
        fold=fold,
        row=row.value if row else None,
        init=student_init.stage.value if student_init else "random",
        n_volumes=len(mri),
        n_clips=len(tvus_pool),
        alpha=stage_cfg.alpha,
        epochs=stage_cfg.epochs,
    )

    history: list[EpochRecord] = []
    checkpoint: Checkpoint | None = None
    step = 0
    for epoch in tqdm(
        range(1, stage_cfg.epochs + 1), desc="distill", disable=settings.LOG_FORMAT == "json"
    ):
        pairs = pair_by_label(mri, tvus_pool, derive_seed(seed, "distill", "pairs", fold_key), epoch)
        teacher_targets = pool_probs[[pool_index[p.tvus_sample.sample_id] for p in pairs]]
        loader = make_loader(
            inputs,
            targets,
            teacher_targets,
            batch_size=stage_cfg.batch_size,
            seed=derive_seed(seed, "distill", "loader", fold_key, epoch),
        )
        kd_weight = schedule.kd_weight(epoch)

        student.train()
        totals = {"loss": 0.0, "kd_loss": 0.0, "ce_loss": 0.0}
        n_batches = 0
        for volumes, labels, soft in epoch_batches(loader, stage_cfg.max_steps_per_epoch):
            volumes, labels, soft = volumes.to(device()), labels.to(device()), soft.to(device())
            logits = student(volumes)
            kd = kd_loss(soft, torch.softmax(logits, dim=-1))
            ce = F.cross_entropy(logits, labels, weight=weight)
            loss = combined_loss(kd, ce, schedule, epoch)
            ensure_finite(loss, "distill", epoch, step)

            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()

            totals["loss"] += float(loss.detach())
            totals["kd_loss"] += float(kd.detach())
            totals["ce_loss"] += float(ce.detach())
            n_batches += 1
            step += 1

        means = {key: value / n_batches for key, value in totals.items()}
        record = EpochRecord(
            epoch=epoch,
            loss=means["loss"],
            metrics={
                "kd_weight": kd_weight,
                "kd_loss": means["kd_loss"],
                "ce_loss": means["ce_loss"],
                "lr": current_lr(optimizer),
            },
        )
        history.append(record)
        logger.info(
            "epoch_complete",
            stage="distilled",
            fold=fold,
            row=row.value if row else None,
            epoch=epoch,
            step=step,
            loss=record.loss,
            kd_weight=kd_weight,
            kd_loss=means["kd_loss"],
            ce_loss=means["ce_loss"],
            lr=record.metrics["lr"],
        )

        if should_checkpoint(epoch, stage_cfg.epochs, stage_cfg.checkpoint_every):
            checkpoint = store.save(
                Stage.DISTILLED,
                student.state_dict(),
                epoch=epoch,
                seed=seed,
                config_hash=config_hash,
                scope=scope,
                fold=fold,
                architecture=student_architecture(student),
                metrics={"loss": record.loss, **record.metrics},
            )

    frozen.verify_unchanged()
    logger.info("teacher_unchanged", digest=digest_before[:12])
    if checkpoint is None:
        raise TrainingError("Distillation finished without writing a checkpoint")
    return TrainingResult(checkpoint=checkpoint, history=history)
