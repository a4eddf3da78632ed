"""
Phantom volumes and clips whose class signal is geometric.

Volumes hold two smooth ellipsoidal bodies stacked along the first axis. A
positive (obliterated) volume adds a band bridging the gap between them.
Clips hold two textured horizontal bands drifting together; in a negative
(normal) clip the upper band also slides against the lower one.

Every random draw happens before the label is consulted, so a positive and a
negative sample of the same (seed, stream, index) differ only by the signal.
"""

import numpy as np
from scipy.special import expit

from app.core.reproducibility import derive_seed
from app.schemas.phantom import PhantomSpec
from app.schemas.samples import ClassLabel, VideoClip, Volume3D

VOLUME_STREAMS = ("pretrain", "mri")
CLIP_STREAM = "tvus"

_EDGE = 0.08
_BODY_CENTERS = (0.3, 0.7)
_BODY_RADII = (0.15, 0.3, 0.3)
_BAND_HALF_WIDTH = 0.07
_BAND_RADIUS = 0.25
_N_FREQUENCIES = 3


def phantom_rng(spec: PhantomSpec, stream: str, index: int) -> np.random.Generator:
    """Generator for one sample; streams never share draws."""
    return np.random.default_rng(derive_seed(spec.seed, "phantom", stream, index))


def _grid(dims: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    axes = [(np.arange(n, dtype=np.float64) + 0.5) / n for n in dims]
    return np.meshgrid(*axes, indexing="ij")


def _soft_ellipsoid(
    grid: tuple[np.ndarray, np.ndarray, np.ndarray],
    center: tuple[float, float, float],
    radii: tuple[float, float, float],
) -> np.ndarray:
    r = np.sqrt(sum(((g - c) / a) ** 2 for g, c, a in zip(grid, center, radii)))
    return expit((1.0 - r) / _EDGE)


def gen_volume(
    label: ClassLabel, spec: PhantomSpec, index: int, stream: str = "mri"
) -> Volume3D:
    """Render one phantom volume.

    Args:
        label: Class to render
        spec: Phantom geometry and signal strength
        index: Sample index within ``stream``
        stream: Index stream, ``mri`` or ``pretrain``

    Returns:
        Volume of ``spec.volume_dims`` at ``spec.volume_spacing``
    """
    rng = phantom_rng(spec, stream, index)
    jitter = rng.uniform(-0.03, 0.03, size=2)
    amplitudes = rng.uniform(0.8, 1.2, size=2)
    noise = rng.standard_normal(spec.volume_dims)

    grid = _grid(spec.volume_dims)
    cy, cz = 0.5 + jitter[0], 0.5 + jitter[1]
    data = np.zeros(spec.volume_dims, dtype=np.float64)
    for center_x, amplitude in zip(_BODY_CENTERS, amplitudes):
        data += amplitude * _soft_ellipsoid(grid, (center_x, cy, cz), _BODY_RADII)

    if ClassLabel(label) is ClassLabel.POSITIVE:
        gx, gy, gz = grid
        slab = expit((_BAND_HALF_WIDTH - np.abs(gx - 0.5)) / 0.02)
        section = expit(
            (1.0 - np.sqrt(((gy - cy) / _BAND_RADIUS) ** 2 + ((gz - cz) / _BAND_RADIUS) ** 2))
            / _EDGE
        )
        data += spec.mri_snr * slab * section

    data += spec.noise_std * noise
    return Volume3D(data=data.astype(np.float32), spacing=spec.volume_spacing)


def _texture(
    x: np.ndarray, shift: float, width: int, params: tuple[np.ndarray, np.ndarray, np.ndarray]
) -> np.ndarray:
    freqs, amps, phases = params
    waves = amps[:, None] * np.sin(
        2.0 * np.pi * freqs[:, None] * (x[None, :] - shift) / width + phases[:, None]
    )
    return waves.sum(axis=0) / np.sqrt((amps**2).sum() / 2.0)


def _texture_params(rng: np.random.Generator, width: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k_max = max(_N_FREQUENCIES, width // 4)
    freqs = rng.choice(np.arange(1, k_max + 1), size=_N_FREQUENCIES, replace=False)
    amps = rng.uniform(0.5, 1.0, size=_N_FREQUENCIES)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=_N_FREQUENCIES)
    return freqs.astype(np.float64), amps, phases


def gen_clip(label: ClassLabel, spec: PhantomSpec, index: int) -> VideoClip:
    """Render one phantom clip.

    Both bands drift by a common random velocity. A negative clip shifts the
    upper band by a further ``tvus_snr * t / (T - 1)`` pixels, so the two
    bands end ``tvus_snr`` pixels apart; a positive clip keeps them rigid.

    Args:
        label: Class to render
        spec: Phantom geometry and signal strength
        index: Sample index within the clip stream

    Returns:
        Clip of ``spec.clip_dims`` (H x W x T)
    """
    rng = phantom_rng(spec, CLIP_STREAM, index)
    height, width, frames = spec.clip_dims
    upper = _texture_params(rng, width)
    lower = _texture_params(rng, width)
    velocity = rng.uniform(-1.0, 1.0)
    noise = rng.standard_normal(spec.clip_dims)

    sliding = ClassLabel(label) is ClassLabel.NEGATIVE
    x = np.arange(width, dtype=np.float64)
    top, middle, bottom = int(0.2 * height), int(0.5 * height), int(0.8 * height)
    data = np.zeros(spec.clip_dims, dtype=np.float64)
    for t in range(frames):
        drift = velocity * t
        relative = spec.tvus_snr * t / (frames - 1) if sliding else 0.0
        data[top:middle, :, t] = _texture(x, drift + relative, width, upper)[None, :]
        data[middle:bottom, :, t] = _texture(x, drift, width, lower)[None, :]

    data += spec.noise_std * noise
    return VideoClip(frames=data.astype(np.float32))
