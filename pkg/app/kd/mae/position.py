"""
Fixed 3D sinusoidal position embeddings.
"""

import numpy as np
import torch


def _axis_embedding(dim: int, positions: np.ndarray) -> np.ndarray:
    omega = np.arange(dim // 2, dtype=np.float64) / (dim / 2.0)
    omega = 1.0 / 10000**omega
    angles = np.outer(positions.astype(np.float64), omega)
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def sinusoidal_position_embedding_3d(
    grid_dims: tuple[int, int, int], embed_dim: int, cls_token: bool = False
) -> torch.Tensor:
    """Sin/cos embedding over a 3D patch grid.

    Each axis gets ``(embed_dim // 6) * 2`` channels; any remainder is zero.
    Rows follow the C-order patch ordering of ``patchify``.

    Args:
        grid_dims: Patch-grid shape
        embed_dim: Embedding width
        cls_token: Prepend an all-zero row for a class token

    Returns:
        Tensor of shape (L_total [+1], embed_dim)
    """
    per_axis = (embed_dim // 6) * 2
    coords = np.stack(
        np.meshgrid(*(np.arange(g) for g in grid_dims), indexing="ij"), axis=-1
    ).reshape(-1, 3)
    table = np.zeros((coords.shape[0], embed_dim), dtype=np.float64)
    if per_axis > 0:
        parts = [_axis_embedding(per_axis, coords[:, axis]) for axis in range(3)]
        table[:, : 3 * per_axis] = np.concatenate(parts, axis=1)
    if cls_token:
        table = np.concatenate([np.zeros((1, embed_dim)), table], axis=0)
    return torch.from_numpy(table).float()
