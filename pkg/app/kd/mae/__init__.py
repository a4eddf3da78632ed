"""Masked-autoencoder pre-training of the 3D ViT encoder."""

from app.kd.mae.masking import PatchMask, sample_mask
from app.kd.mae.model import MaskedAutoencoder3D, ViTEncoder3D, mae_forward, mae_loss
from app.kd.mae.patches import PatchSequence, patchify, unpatchify
from app.kd.mae.position import sinusoidal_position_embedding_3d
from app.kd.mae.trainer import load_mae, pretrain_mae
