"""
3D ViT encoder and asymmetric masked autoencoder.
"""

import torch
from torch import nn

from app.core.exceptions import InvalidInputError, ShapeMismatchError
from app.kd.mae.masking import PatchMask, sample_mask
from app.kd.mae.patches import patchify_tensor, unpatchify_tensor
from app.kd.mae.position import sinusoidal_position_embedding_3d
from app.schemas.architecture import DecoderConfig, EncoderConfig


def transformer_block(dim: int, num_heads: int, mlp_ratio: float) -> nn.TransformerEncoderLayer:
    """Pre-norm transformer block with GELU MLP and no dropout."""
    return nn.TransformerEncoderLayer(
        d_model=dim,
        nhead=num_heads,
        dim_feedforward=int(dim * mlp_ratio),
        dropout=0.0,
        activation="gelu",
        batch_first=True,
        norm_first=True,
    )


def _init_linear(module: nn.Module) -> None:
    if isinstance(module, nn.Linear):
        nn.init.xavier_uniform_(module.weight)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.LayerNorm):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


class ViTEncoder3D(nn.Module):
    """Volumetric transformer over non-overlapping cube patches."""

    def __init__(self, config: EncoderConfig):
        """Initialize encoder.

        Args:
            config: Encoder geometry
        """
        super().__init__()
        self.config = config
        dim = config.embed_dim

        self.patch_embed = nn.Linear(config.patch_voxels, dim)
        self.register_buffer(
            "pos_embed",
            sinusoidal_position_embedding_3d(config.grid_dims, dim).unsqueeze(0),
        )
        if config.pooling == "cls":
            self.cls_token: nn.Parameter | None = nn.Parameter(torch.zeros(1, 1, dim))
        else:
            self.register_parameter("cls_token", None)
        self.blocks = nn.ModuleList(
            [transformer_block(dim, config.num_heads, config.mlp_ratio) for _ in range(config.depth)]
        )
        self.norm = nn.LayerNorm(dim)

        self.apply(_init_linear)
        if self.cls_token is not None:
            nn.init.normal_(self.cls_token, std=0.02)

    def check_input(self, x: torch.Tensor) -> None:
        """Reject inputs whose shape disagrees with the configured geometry.

        Raises:
            ShapeMismatchError: If ``x`` is not (B, 1, *input_dims)
        """
        expected = (1, *self.config.input_dims)
        if x.ndim != 5 or tuple(x.shape[1:]) != expected:
            raise ShapeMismatchError(
                f"Encoder expects (B, {', '.join(map(str, expected))}), got {tuple(x.shape)}",
                details={"expected": list(expected), "got": list(x.shape)},
            )

    def forward(self, x: torch.Tensor, visible: torch.Tensor | None = None) -> torch.Tensor:
        """Encode a batch of volumes.

        Args:
            x: Volumes of shape (B, 1, H, W, D)
            visible: Optional patch indices to keep; others are dropped
                before the transformer blocks

        Returns:
            Token features (B, N, embed_dim), class token first when enabled
        """
        self.check_input(x)
        tokens = self.patch_embed(patchify_tensor(x, self.config.patch_size)) + self.pos_embed
        if visible is not None:
            tokens = tokens[:, visible]
        if self.cls_token is not None:
            cls = self.cls_token.expand(tokens.shape[0], -1, -1)
            tokens = torch.cat([cls, tokens], dim=1)
        for block in self.blocks:
            tokens = block(tokens)
        return self.norm(tokens)

    def forward_features(self, x: torch.Tensor) -> torch.Tensor:
        """Pooled (B, embed_dim) feature: class token or mean over patch tokens."""
        tokens = self(x)
        if self.cls_token is not None:
            return tokens[:, 0]
        return tokens.mean(dim=1)


class MaskedAutoencoder3D(nn.Module):
    """Encoder on visible patches, light decoder reconstructing every voxel."""

    def __init__(
        self,
        encoder_config: EncoderConfig,
        decoder_config: DecoderConfig,
        mask_ratio: float = 0.5,
    ):
        """Initialize MAE.

        Args:
            encoder_config: Encoder geometry
            decoder_config: Decoder width and depth
            mask_ratio: Fraction of patches hidden per step
        """
        super().__init__()
        self.encoder_config = encoder_config
        self.decoder_config = decoder_config
        self.mask_ratio = mask_ratio
        dim = decoder_config.embed_dim

        self.encoder = ViTEncoder3D(encoder_config)
        self.decoder_embed = nn.Linear(encoder_config.embed_dim, dim)
        self.mask_token = nn.Parameter(torch.zeros(1, 1, dim))
        self.register_buffer(
            "decoder_pos_embed",
            sinusoidal_position_embedding_3d(encoder_config.grid_dims, dim).unsqueeze(0),
        )
        self.decoder_blocks = nn.ModuleList(
            [
                transformer_block(dim, decoder_config.num_heads, decoder_config.mlp_ratio)
                for _ in range(decoder_config.depth)
            ]
        )
        self.decoder_norm = nn.LayerNorm(dim)
        self.decoder_pred = nn.Linear(dim, encoder_config.patch_voxels)

        for module in (self.decoder_embed, self.decoder_norm, self.decoder_pred):
            module.apply(_init_linear)
        self.decoder_blocks.apply(_init_linear)
        nn.init.normal_(self.mask_token, std=0.02)

    def forward(self, x: torch.Tensor, mask: PatchMask) -> torch.Tensor:
        """Reconstruct a batch of volumes from their visible patches.

        Args:
            x: Volumes (B, 1, H, W, D)
            mask: Patches hidden from the encoder, shared by the batch

        Returns:
            Reconstruction with the shape of ``x``
        """
        if mask.l_total != self.encoder_config.num_patches:
            raise ShapeMismatchError(
                f"Mask covers {mask.l_total} patches, encoder has "
                f"{self.encoder_config.num_patches}"
            )
        device = x.device
        visible = torch.tensor(mask.visible_indices, dtype=torch.long, device=device)

        latent = self.encoder(x, visible)
        if self.encoder.cls_token is not None:
            latent = latent[:, 1:]
        tokens = self.decoder_embed(latent)

        if mask.num_masked:
            fill = self.mask_token.expand(tokens.shape[0], mask.num_masked, -1)
            tokens = torch.cat([tokens, fill], dim=1)
        order = torch.tensor(
            mask.visible_indices + mask.masked_indices, dtype=torch.long, device=device
        )
        tokens = tokens[:, torch.argsort(order)] + self.decoder_pos_embed

        for block in self.decoder_blocks:
            tokens = block(tokens)
        pred = self.decoder_pred(self.decoder_norm(tokens))
        return unpatchify_tensor(pred, self.encoder_config.grid_dims, self.encoder_config.patch_size)


def mae_forward(
    model: MaskedAutoencoder3D, vols: torch.Tensor, mask_seed: int
) -> tuple[torch.Tensor, PatchMask]:
    """Sample a mask from ``mask_seed`` and reconstruct ``vols``.

    Returns:
        Reconstruction and the mask used
    """
    mask = sample_mask(model.encoder_config.num_patches, model.mask_ratio, mask_seed)
    return model(vols, mask), mask


def mae_loss(
    original: torch.Tensor,
    reconstructed: torch.Tensor,
    mask: PatchMask,
    patch_size: int,
    per_voxel: bool = True,
) -> torch.Tensor:
    """Squared reconstruction error over masked patches only.

    The raw value sums each masked patch's squared L2 error and divides by
    ``L * K`` (masked patches per volume times batch size). ``per_voxel``
    further divides by ``patch_size ** 3``.

    Args:
        original: Target volumes (B, 1, H, W, D)
        reconstructed: Reconstruction of the same shape
        mask: Masked patches
        patch_size: Patch edge length
        per_voxel: Report per-voxel MSE instead of the raw patch-norm value

    Returns:
        Scalar loss

    Raises:
        InvalidInputError: If the mask is empty
        ShapeMismatchError: If shapes differ or the mask does not fit
    """
    if mask.is_empty:
        raise InvalidInputError("mae_loss needs at least one masked patch")
    if original.shape != reconstructed.shape:
        raise ShapeMismatchError(
            f"Original {tuple(original.shape)} and reconstruction "
            f"{tuple(reconstructed.shape)} differ"
        )
    target = patchify_tensor(original, patch_size)
    if target.shape[1] != mask.l_total:
        raise ShapeMismatchError(
            f"Mask covers {mask.l_total} patches, volumes have {target.shape[1]}"
        )
    index = torch.tensor(mask.masked_indices, dtype=torch.long, device=original.device)
    pred = patchify_tensor(reconstructed, patch_size)[:, index]
    patch_error = (pred - target[:, index]).pow(2).sum(dim=-1)
    raw = patch_error.mean()
    return raw / patch_size**3 if per_voxel else raw
