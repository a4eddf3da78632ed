"""
Video clip readers: NumPy array containers and ordered frame directories.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from app.core.exceptions import DatasetParsingError
from app.core.logging import get_logger
from app.domain.interfaces.sample_reader import SampleReader
from app.schemas.samples import VideoClip, Volume3D

logger = get_logger(__name__)

_FRAME_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


class NumpyClipReader(SampleReader):
    """Clip stored as one H x W x T ``.npy`` array."""

    def read(self, path: Path) -> VideoClip:
        """Read a clip array.

        Raises:
            DatasetParsingError: If the file cannot be parsed
        """
        try:
            frames = np.load(path, allow_pickle=False)
            clip = VideoClip(frames=frames)
        except Exception as e:
            logger.error("clip_parsing_failed", path=str(path), error=str(e))
            raise DatasetParsingError(f"Failed to read clip {path}: {e}") from e
        return clip

    def write(self, sample: Volume3D | VideoClip, path: Path) -> Path:
        """Write a clip array."""
        if not isinstance(sample, VideoClip):
            raise DatasetParsingError("Clip writer only accepts clips")
        path.parent.mkdir(parents=True, exist_ok=True)
        np.save(path, np.asarray(sample.frames, dtype=np.float32), allow_pickle=False)
        return path

    @property
    def supported_formats(self) -> list[str]:
        """Get list of supported suffixes."""
        return [".npy"]


class FrameDirectoryReader(SampleReader):
    """Clip stored as a directory of ordered grayscale frame images."""

    def read(self, path: Path) -> VideoClip:
        """Read frames sorted by file name and stack them along T.

        Raises:
            DatasetParsingError: If the directory holds no readable frames
        """
        frame_paths = sorted(
            p for p in path.iterdir() if p.suffix.lower() in _FRAME_SUFFIXES
        )
        if len(frame_paths) < 2:
            raise DatasetParsingError(
                f"Frame directory {path} holds {len(frame_paths)} frames, need >= 2"
            )
        try:
            frames = [
                np.asarray(Image.open(p).convert("L"), dtype=np.float32) / 255.0
                for p in frame_paths
            ]
            clip = VideoClip(frames=np.stack(frames, axis=-1))
        except Exception as e:
            logger.error("frame_directory_parsing_failed", path=str(path), error=str(e))
            raise DatasetParsingError(f"Failed to read frames in {path}: {e}") from e

        logger.debug("frames_read", path=str(path), num_frames=len(frame_paths))
        return clip

    def write(self, sample: Volume3D | VideoClip, path: Path) -> Path:
        """Write frames as 8-bit PNGs after min-max scaling."""
        if not isinstance(sample, VideoClip):
            raise DatasetParsingError("Frame writer only accepts clips")
        path.mkdir(parents=True, exist_ok=True)
        frames = sample.frames
        lo, hi = float(frames.min()), float(frames.max())
        scaled = (frames - lo) / (hi - lo) if hi > lo else np.zeros_like(frames)
        for t in range(sample.num_frames):
            image = Image.fromarray(np.round(scaled[..., t] * 255).astype(np.uint8))
            image.save(path / f"frame_{t:04d}.png")
        return path

    @property
    def supported_formats(self) -> list[str]:
        """Get list of supported suffixes (directories have none)."""
        return [""]
