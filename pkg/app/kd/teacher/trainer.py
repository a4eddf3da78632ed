"""
Cross-entropy training and inference for the clip teacher.
"""

from typing import Sequence

from torch import nn
from tqdm import tqdm

from app.core.config import settings
from app.core.exceptions import TrainingError
from app.core.logging import get_logger
from app.core.reproducibility import derive_seed, seed_everything
from app.infrastructure.storage import CheckpointStore, require_stage
from app.kd.inference import predict_probabilities, to_prob_outputs
from app.kd.teacher.model import TeacherNetwork, build_teacher, import_backbone_weights
from app.kd.training import (
    EpochRecord,
    TrainingResult,
    build_optimizer,
    clip_tensor,
    current_lr,
    device,
    ensure_finite,
    epoch_batches,
    label_tensor,
    make_loader,
    require_both_classes,
    sample_tensor,
    should_checkpoint,
)
from app.schemas.architecture import TeacherConfig
from app.schemas.checkpoint import Checkpoint, Stage
from app.schemas.experiment import ExperimentConfig
from app.schemas.samples import LabeledSample, ProbOutput, VideoClip

logger = get_logger(__name__)


def load_teacher(checkpoint: Checkpoint) -> TeacherNetwork:
    """Rebuild a trained teacher in eval mode.

    Raises:
        StageMismatchError: If the checkpoint is not a teacher checkpoint
    """
    require_stage(checkpoint, Stage.TEACHER)
    config = TeacherConfig.model_validate(checkpoint.manifest.architecture["teacher"])
    model = build_teacher(config)
    model.load_state_dict(CheckpointStore.load_state(checkpoint))
    model.to(device())
    return model.eval()


def train_teacher(
    dataset: Sequence[LabeledSample],
    config: ExperimentConfig,
    store: CheckpointStore,
    fold: int | None = None,
    scope: str | None = None,
    config_hash: str | None = None,
) -> TrainingResult:
    """Train the clip classifier with cross-entropy against clip labels.

    Args:
        dataset: Labeled clips resized to a common H x W x T
        config: Experiment config; the ``teacher`` section drives training
        store: Checkpoint destination
        fold: Held-out fold this teacher is trained for, if any
        scope: Checkpoint sub-directory
        config_hash: Hash written into manifests; defaults to the teacher stage hash

    Returns:
        Last checkpoint and per-epoch history

    Raises:
        SingleClassError: If the clips hold a single class
        TrainingDivergedError: On a non-finite loss
    """
    require_both_classes(dataset, "Teacher training set")
    stage_cfg = config.teacher
    config_hash = config_hash or config.stage_hash(Stage.TEACHER, fold)
    seed = config.seed

    seed_everything(derive_seed(seed, "teacher", "init", fold if fold is not None else -1))
    model = build_teacher(stage_cfg.network)
    if stage_cfg.pretrained:
        import_backbone_weights(model, stage_cfg.pretrained)
    model.to(device())
    optimizer = build_optimizer(model, stage_cfg)
    criterion = nn.CrossEntropyLoss()

    inputs = sample_tensor(dataset)
    targets = label_tensor(dataset)
    loader = make_loader(
        inputs,
        targets,
        batch_size=stage_cfg.batch_size,
        seed=derive_seed(seed, "teacher", "loader", fold if fold is not None else -1),
        drop_last=len(dataset) > stage_cfg.batch_size and len(dataset) % stage_cfg.batch_size == 1,
    )

    logger.info(
        "teacher_training_started",
        fold=fold,
        n_clips=len(dataset),
        n_positive=int(targets.sum()),
        epochs=stage_cfg.epochs,
        pretrained=stage_cfg.pretrained,
    )

    history: list[EpochRecord] = []
    checkpoint: Checkpoint | None = None
    step = 0
    for epoch in tqdm(
        range(1, stage_cfg.epochs + 1), desc="teacher", disable=settings.LOG_FORMAT == "json"
    ):
        model.train()
        total, correct, seen, n_batches = 0.0, 0, 0, 0
        for clips, labels in epoch_batches(loader, stage_cfg.max_steps_per_epoch):
            clips, labels = clips.to(device()), labels.to(device())
            logits = model(clips)
            loss = criterion(logits, labels)
            ensure_finite(loss, "teacher", epoch, step)

            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()

            total += float(loss.detach())
            correct += int((logits.argmax(dim=-1) == labels).sum())
            seen += int(labels.numel())
            n_batches += 1
            step += 1

        record = EpochRecord(
            epoch=epoch,
            loss=total / n_batches,
            metrics={"train_accuracy": correct / seen, "lr": current_lr(optimizer)},
        )
        history.append(record)
        logger.info(
            "epoch_complete",
            stage="teacher",
            fold=fold,
            epoch=epoch,
            step=step,
            loss=record.loss,
            train_accuracy=record.metrics["train_accuracy"],
            lr=record.metrics["lr"],
        )

        if should_checkpoint(epoch, stage_cfg.epochs, stage_cfg.checkpoint_every):
            checkpoint = store.save(
                Stage.TEACHER,
                model.state_dict(),
                epoch=epoch,
                seed=seed,
                config_hash=config_hash,
                scope=scope,
                fold=fold,
                architecture={"teacher": stage_cfg.network.model_dump(mode="json")},
                metrics={"loss": record.loss, **record.metrics},
            )

    if checkpoint is None:
        raise TrainingError("Teacher training finished without writing a checkpoint")
    return TrainingResult(checkpoint=checkpoint, history=history)


def predict_clips(model: TeacherNetwork, clips: Sequence[VideoClip]) -> list[ProbOutput]:
    """Eval-mode probabilities for a list of clips."""
    return to_prob_outputs(predict_probabilities(model, clip_tensor(clips)))


def teacher_predict(clip: VideoClip, checkpoint: Checkpoint) -> ProbOutput:
    """Probability output of a trained teacher for one clip.

    Raises:
        StageMismatchError: If the checkpoint is not a teacher checkpoint
    """
    return predict_clips(load_teacher(checkpoint), [clip])[0]
