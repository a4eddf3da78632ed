"""
Volume and clip preprocessing: isotropic resampling, slice-count filtering,
intensity normalisation, 3D CLAHE and ROI cropping.
"""

import math

import numpy as np
from scipy import ndimage
from skimage import exposure

from app.core.exceptions import InvalidClipError, InvalidInputError, InvalidVolumeError
from app.core.logging import get_logger
from app.schemas.experiment import ClaheConfig, DataConfig
from app.schemas.samples import VideoClip, Volume3D

logger = get_logger(__name__)

DEFAULT_MIN_SLICES = 65
MIN_CLAHE_TILE = 8


def resample_isotropic(vol: Volume3D, target_spacing_mm: float = 1.0) -> Volume3D:
    """Resample to isotropic spacing with trilinear interpolation.

    Output dims are ``round(dim * spacing / target)``, so the physical extent is
    preserved within half an output voxel per axis.

    Args:
        vol: Input volume
        target_spacing_mm: Output spacing on every axis

    Returns:
        Resampled volume

    Raises:
        InvalidVolumeError: If any dimension is < 2
        InvalidInputError: If the target spacing is not positive
    """
    if target_spacing_mm <= 0:
        raise InvalidInputError(f"target_spacing_mm must be > 0, got {target_spacing_mm}")
    if min(vol.shape) < 2:
        raise InvalidVolumeError(f"Cannot resample degenerate volume of shape {vol.shape}")

    out_shape = tuple(
        max(1, int(round(n * s / target_spacing_mm))) for n, s in zip(vol.shape, vol.spacing)
    )
    if out_shape == vol.shape:
        data = np.array(vol.data, copy=True)
    else:
        zoom = [o / n for o, n in zip(out_shape, vol.shape)]
        data = ndimage.zoom(
            np.asarray(vol.data, dtype=np.float64),
            zoom,
            order=1,
            mode="nearest",
            grid_mode=False,
        )
    target = (float(target_spacing_mm),) * 3
    logger.debug("volume_resampled", in_shape=vol.shape, out_shape=data.shape)
    return Volume3D(data=data, spacing=target)


def filter_min_slices(vol: Volume3D, min_slices: int = DEFAULT_MIN_SLICES) -> bool:
    """Keep a volume only if every dimension has at least ``min_slices`` slices."""
    return min(vol.shape) >= min_slices


def normalize_minmax(vol: Volume3D) -> Volume3D:
    """Per-volume min-max normalisation to [0, 1]; constant volumes map to 0."""
    data = np.asarray(vol.data, dtype=np.float64)
    lo, hi = float(data.min()), float(data.max())
    scaled = (data - lo) / (hi - lo) if hi > lo else np.zeros_like(data)
    return Volume3D(data=scaled, spacing=vol.spacing)


def clahe_tile_size(
    shape: tuple[int, int, int], tile_grid: tuple[int, int, int]
) -> tuple[int, int, int]:
    """Voxels per CLAHE tile along each axis."""
    nx, ny, nz = (math.ceil(n / g) for n, g in zip(shape, tile_grid))
    return nx, ny, nz


def clahe_3d(
    vol: Volume3D,
    clip_limit: float = 0.03,
    tile_grid: tuple[int, int, int] = (8, 8, 8),
    nbins: int = 256,
) -> Volume3D:
    """Contrast-limited adaptive histogram equalisation in 3D.

    Tiles are ``ceil(dim / grid)`` voxels per axis; tile mappings are blended
    by trilinear interpolation. Tiles narrower than ``MIN_CLAHE_TILE`` voxels
    hold too few samples for a stable histogram and a second pass can move
    the mean intensity by more than 0.05; they are allowed but logged.

    Args:
        vol: Volume with intensities in [0, 1]
        clip_limit: Normalised histogram clip limit
        tile_grid: Number of tiles per axis
        nbins: Histogram bins

    Returns:
        Equalised volume in [0, 1]

    Raises:
        InvalidVolumeError: If intensities leave [0, 1] or the grid exceeds the dims
    """
    data = np.asarray(vol.data, dtype=np.float64)
    if data.min() < 0.0 or data.max() > 1.0:
        raise InvalidVolumeError("clahe_3d expects intensities normalised to [0, 1]")
    if any(g < 1 or g > n for g, n in zip(tile_grid, vol.shape)):
        raise InvalidVolumeError(
            f"Tile grid {tile_grid} does not fit volume of shape {vol.shape}"
        )
    if data.max() == data.min():
        return Volume3D(data=data, spacing=vol.spacing)

    kernel_size = clahe_tile_size(vol.shape, tile_grid)
    if min(kernel_size) < MIN_CLAHE_TILE:
        logger.warning(
            "clahe_small_tiles",
            shape=vol.shape,
            tile_grid=tile_grid,
            tile=kernel_size,
            minimum=MIN_CLAHE_TILE,
        )
    equalized = exposure.equalize_adapthist(
        data, kernel_size=kernel_size, clip_limit=clip_limit, nbins=nbins
    )
    return Volume3D(data=np.clip(equalized, 0.0, 1.0), spacing=vol.spacing)


def crop_roi(
    vol: Volume3D,
    center_fraction: tuple[float, float, float] = (0.5, 0.5, 0.5),
    out_dims: tuple[int, int, int] = (64, 64, 64),
) -> Volume3D:
    """Axis-aligned crop of ``out_dims`` centred at fractional coordinates.

    Raises:
        InvalidVolumeError: If the crop leaves the volume
    """
    if any(not 0.0 < c <= 1.0 for c in center_fraction):
        raise InvalidInputError(f"center_fraction must lie in (0, 1], got {center_fraction}")
    starts = []
    for n, c, o in zip(vol.shape, center_fraction, out_dims):
        start = int(math.floor(c * n - o / 2))
        if o < 1 or o > n or start < 0 or start + o > n:
            raise InvalidVolumeError(
                f"Crop {out_dims} at {center_fraction} leaves volume of shape {vol.shape}"
            )
        starts.append(start)
    slices = tuple(slice(s, s + o) for s, o in zip(starts, out_dims))
    return Volume3D(data=vol.data[slices], spacing=vol.spacing)


def preprocess_volume(
    vol: Volume3D,
    data_cfg: DataConfig,
    out_dims: tuple[int, int, int],
    apply_filter: bool = True,
) -> Volume3D | None:
    """Resample, filter, normalise, equalise and crop one volume.

    Args:
        vol: Raw volume
        data_cfg: Preprocessing settings
        out_dims: Model input dims for the final crop
        apply_filter: Drop volumes with too few slices

    Returns:
        Preprocessed volume, or None when filtered out
    """
    resampled = resample_isotropic(vol, data_cfg.target_spacing_mm)
    if apply_filter and not filter_min_slices(resampled, data_cfg.min_slices):
        logger.info(
            "volume_filtered",
            shape=resampled.shape,
            min_slices=data_cfg.min_slices,
        )
        return None
    normalized = normalize_minmax(resampled)
    enhanced = _apply_clahe(normalized, data_cfg.clahe)
    return crop_roi(enhanced, data_cfg.crop_center_fraction, out_dims)


def _apply_clahe(vol: Volume3D, cfg: ClaheConfig) -> Volume3D:
    if not cfg.enabled:
        return vol
    return clahe_3d(vol, cfg.clip_limit, cfg.tile_grid, cfg.nbins)


def resize_clip(clip: VideoClip, dims: tuple[int, int, int]) -> VideoClip:
    """Resize a clip to ``(H, W, T)`` with trilinear interpolation.

    Raises:
        InvalidClipError: If the target has fewer than 2 frames
    """
    if dims[2] < 2:
        raise InvalidClipError(f"Target clip needs at least 2 frames, got {dims}")
    if tuple(clip.frames.shape) == tuple(dims):
        return clip
    zoom = [d / n for d, n in zip(dims, clip.frames.shape)]
    frames = ndimage.zoom(
        np.asarray(clip.frames, dtype=np.float64), zoom, order=1, mode="nearest", grid_mode=False
    )
    return VideoClip(frames=frames)


def standardize_clip(clip: VideoClip) -> VideoClip:
    """Zero-mean, unit-variance intensities per clip."""
    frames = np.asarray(clip.frames, dtype=np.float64)
    std = float(frames.std())
    centered = frames - frames.mean()
    return VideoClip(frames=centered / std if std > 0 else centered)
