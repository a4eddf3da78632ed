"""
Masked-autoencoder pre-training loop.
"""

from typing import Sequence

import torch
from tqdm import tqdm

from app.core.config import settings
from app.core.exceptions import InvalidInputError, TrainingError
from app.core.logging import get_logger
from app.core.reproducibility import derive_seed, seed_everything
from app.infrastructure.storage import CheckpointStore, require_stage
from app.kd.mae.model import MaskedAutoencoder3D, mae_forward, mae_loss
from app.kd.training import (
    EpochRecord,
    TrainingResult,
    build_optimizer,
    current_lr,
    device,
    ensure_finite,
    epoch_batches,
    make_loader,
    should_checkpoint,
    volume_tensor,
)
from app.schemas.architecture import DecoderConfig, EncoderConfig
from app.schemas.checkpoint import Checkpoint, Stage
from app.schemas.experiment import ExperimentConfig
from app.schemas.samples import Volume3D

logger = get_logger(__name__)


def mae_architecture(model: MaskedAutoencoder3D) -> dict:
    """Manifest entry needed to rebuild ``model``."""
    return {
        "encoder": model.encoder_config.model_dump(mode="json"),
        "decoder": model.decoder_config.model_dump(mode="json"),
        "mask_ratio": model.mask_ratio,
    }


def load_mae(checkpoint: Checkpoint) -> MaskedAutoencoder3D:
    """Rebuild an MAE from its checkpoint.

    Raises:
        StageMismatchError: If the checkpoint is not an MAE checkpoint
    """
    require_stage(checkpoint, Stage.MAE)
    arch = checkpoint.manifest.architecture
    model = MaskedAutoencoder3D(
        EncoderConfig.model_validate(arch["encoder"]),
        DecoderConfig.model_validate(arch["decoder"]),
        float(arch["mask_ratio"]),
    )
    model.load_state_dict(CheckpointStore.load_state(checkpoint))
    return model


def pretrain_mae(
    dataset: Sequence[Volume3D],
    config: ExperimentConfig,
    store: CheckpointStore,
    config_hash: str | None = None,
) -> TrainingResult:
    """Pre-train the encoder by reconstructing masked patches.

    A fresh mask is drawn for every optimisation step from a seed derived
    from the step counter.

    Args:
        dataset: Preprocessed unlabeled volumes shaped like the encoder input
        config: Experiment config; the ``mae`` section drives training
        store: Checkpoint destination
        config_hash: Hash written into manifests; defaults to the MAE stage hash

    Returns:
        Last checkpoint and per-epoch history

    Raises:
        InvalidInputError: If the dataset is empty
        TrainingDivergedError: On a non-finite loss
    """
    if not dataset:
        raise InvalidInputError("MAE pre-training needs at least one volume")
    stage_cfg = config.mae
    config_hash = config_hash or config.stage_hash(Stage.MAE)
    seed = config.seed
    patch_size = stage_cfg.encoder.patch_size

    seed_everything(derive_seed(seed, "mae", "init"))
    model = MaskedAutoencoder3D(stage_cfg.encoder, stage_cfg.decoder, stage_cfg.mask_ratio)
    model.to(device())
    optimizer = build_optimizer(model, stage_cfg)
    loader = make_loader(
        volume_tensor(dataset),
        batch_size=stage_cfg.batch_size,
        seed=derive_seed(seed, "mae", "loader"),
    )

    logger.info(
        "mae_pretraining_started",
        n_volumes=len(dataset),
        epochs=stage_cfg.epochs,
        num_patches=stage_cfg.encoder.num_patches,
        mask_ratio=stage_cfg.mask_ratio,
    )

    history: list[EpochRecord] = []
    checkpoint: Checkpoint | None = None
    step = 0
    for epoch in tqdm(
        range(1, stage_cfg.epochs + 1), desc="mae", disable=settings.LOG_FORMAT == "json"
    ):
        model.train()
        total, total_raw, n_batches = 0.0, 0.0, 0
        for (batch,) in epoch_batches(loader, stage_cfg.max_steps_per_epoch):
            batch = batch.to(device())
            recon, mask = mae_forward(model, batch, derive_seed(seed, "mae", "mask", step))
            loss = mae_loss(batch, recon, mask, patch_size, per_voxel=stage_cfg.per_voxel_loss)
            ensure_finite(loss, "mae", epoch, step)

            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()

            raw = loss.detach() * patch_size**3 if stage_cfg.per_voxel_loss else loss.detach()
            total += float(loss.detach())
            total_raw += float(raw)
            n_batches += 1
            step += 1
            logger.debug("mae_step", step=step, epoch=epoch, loss=float(loss.detach()))

        record = EpochRecord(
            epoch=epoch,
            loss=total / n_batches,
            metrics={"raw_loss": total_raw / n_batches, "lr": current_lr(optimizer)},
        )
        history.append(record)
        logger.info(
            "epoch_complete",
            stage="mae",
            epoch=epoch,
            step=step,
            loss=record.loss,
            raw_loss=record.metrics["raw_loss"],
            lr=record.metrics["lr"],
        )

        if should_checkpoint(epoch, stage_cfg.epochs, stage_cfg.checkpoint_every):
            checkpoint = store.save(
                Stage.MAE,
                model.state_dict(),
                epoch=epoch,
                seed=seed,
                config_hash=config_hash,
                architecture=mae_architecture(model),
                metrics={"loss": record.loss, "raw_loss": record.metrics["raw_loss"]},
            )

    if checkpoint is None:
        raise TrainingError("MAE pre-training finished without writing a checkpoint")
    return TrainingResult(checkpoint=checkpoint, history=history)


@torch.no_grad()
def reconstruction_error(
    model: MaskedAutoencoder3D, volumes: Sequence[Volume3D], mask_seed: int
) -> float:
    """Per-voxel masked MSE of ``model`` on ``volumes`` under one fixed mask."""
    model.eval()
    batch = volume_tensor(volumes).to(device())
    recon, mask = mae_forward(model, batch, mask_seed)
    return float(mae_loss(batch, recon, mask, model.encoder_config.patch_size))
