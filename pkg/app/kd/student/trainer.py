"""
Cross-entropy fine-tuning and inference for the volumetric student.
"""

from typing import Sequence

from torch import nn
from tqdm import tqdm

from app.core.config import settings
from app.core.exceptions import TrainingError
from app.core.logging import get_logger
from app.core.reproducibility import derive_seed, seed_everything
from app.infrastructure.storage import CheckpointStore
from app.kd.inference import predict_probabilities, to_prob_outputs
from app.kd.student.model import StudentClassifier, load_student, student_architecture
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
    volume_tensor,
)
from app.schemas.checkpoint import Checkpoint, Stage
from app.schemas.experiment import ExperimentConfig
from app.schemas.samples import LabeledSample, ProbOutput, Volume3D

logger = get_logger(__name__)


def finetune_student(
    dataset: Sequence[LabeledSample],
    model: StudentClassifier,
    config: ExperimentConfig,
    store: CheckpointStore,
    fold: int | None = None,
    scope: str | None = None,
    config_hash: str | None = None,
) -> TrainingResult:
    """Fine-tune every student parameter with cross-entropy.

    A checkpoint is written after every epoch so later stages can pick a
    specific epoch.

    Args:
        dataset: Labeled, preprocessed volumes
        model: Student to train in place
        config: Experiment config; the ``finetune`` section drives training
        store: Checkpoint destination
        fold: Held-out fold, if any
        scope: Checkpoint sub-directory
        config_hash: Hash written into manifests

    Returns:
        Last checkpoint and per-epoch history

    Raises:
        SingleClassError: If the volumes hold a single class
        TrainingDivergedError: On a non-finite loss
    """
    require_both_classes(dataset, "Fine-tuning set")
    stage_cfg = config.finetune
    config_hash = config_hash or config.stage_hash(Stage.STUDENT_FT, fold)
    seed = config.seed
    fold_key = fold if fold is not None else -1

    seed_everything(derive_seed(seed, "finetune", "run", fold_key))
    model.to(device())
    optimizer = build_optimizer(model, stage_cfg)

    targets = label_tensor(dataset)
    weight = inverse_frequency_weights(targets).to(device()) if stage_cfg.class_weighting else None
    criterion = nn.CrossEntropyLoss(weight=weight)
    loader = make_loader(
        sample_tensor(dataset),
        targets,
        batch_size=stage_cfg.batch_size,
        seed=derive_seed(seed, "finetune", "loader", fold_key),
    )

    logger.info(
        "finetune_started",
        fold=fold,
        n_volumes=len(dataset),
        n_positive=int(targets.sum()),
        epochs=stage_cfg.epochs,
        class_weighting=stage_cfg.class_weighting,
    )

    history: list[EpochRecord] = []
    checkpoint: Checkpoint | None = None
    step = 0
    for epoch in tqdm(
        range(1, stage_cfg.epochs + 1), desc="finetune", disable=settings.LOG_FORMAT == "json"
    ):
        model.train()
        total, correct, seen, n_batches = 0.0, 0, 0, 0
        for volumes, labels in epoch_batches(loader, stage_cfg.max_steps_per_epoch):
            volumes, labels = volumes.to(device()), labels.to(device())
            logits = model(volumes)
            loss = criterion(logits, labels)
            ensure_finite(loss, "finetune", epoch, step)

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
            stage="student_ft",
            fold=fold,
            epoch=epoch,
            step=step,
            loss=record.loss,
            train_accuracy=record.metrics["train_accuracy"],
            lr=record.metrics["lr"],
        )
        checkpoint = store.save(
            Stage.STUDENT_FT,
            model.state_dict(),
            epoch=epoch,
            seed=seed,
            config_hash=config_hash,
            scope=scope,
            fold=fold,
            architecture=student_architecture(model),
            metrics={"loss": record.loss, **record.metrics},
        )

    if checkpoint is None:
        raise TrainingError("Fine-tuning finished without writing a checkpoint")
    return TrainingResult(checkpoint=checkpoint, history=history)


def predict_volumes(model: StudentClassifier, volumes: Sequence[Volume3D]) -> list[ProbOutput]:
    """Eval-mode probabilities for a list of volumes."""
    return to_prob_outputs(predict_probabilities(model, volume_tensor(volumes)))


def student_predict(vol: Volume3D, checkpoint: Checkpoint) -> ProbOutput:
    """Probability output of a fine-tuned or distilled student for one volume.

    Raises:
        StageMismatchError: If the checkpoint is neither student_ft nor distilled
    """
    return predict_volumes(load_student(checkpoint), [vol])[0]
