"""
Sample loader with reader factory.
"""

from pathlib import Path

from app.core.exceptions import UnsupportedFileFormatError
from app.core.logging import get_logger
from app.domain.interfaces.sample_reader import SampleReader
from app.kd.ingestion.readers.clip_reader import FrameDirectoryReader, NumpyClipReader
from app.kd.ingestion.readers.nifti_reader import NiftiVolumeReader
from app.schemas.samples import VideoClip, Volume3D

logger = get_logger(__name__)


def sample_suffix(path: Path) -> str:
    """Format key of a path: '' for directories, '.nii.gz' aware otherwise."""
    if path.is_dir():
        return ""
    name = path.name.lower()
    if name.endswith(".nii.gz"):
        return ".nii.gz"
    return path.suffix.lower()


class DatasetLoader:
    """Sample loader with automatic reader selection."""

    def __init__(self) -> None:
        """Initialize loader with available readers."""
        nifti = NiftiVolumeReader()
        self.readers: dict[str, SampleReader] = {
            ".nii": nifti,
            ".nii.gz": nifti,
            ".npy": NumpyClipReader(),
            "": FrameDirectoryReader(),
        }

    def reader_for(self, path: Path) -> SampleReader:
        """Reader handling ``path``.

        Raises:
            UnsupportedFileFormatError: If no reader handles the format
        """
        suffix = sample_suffix(path)
        if suffix not in self.readers:
            supported = ", ".join(s or "<frame directory>" for s in self.readers)
            raise UnsupportedFileFormatError(
                f"Unsupported sample format: {suffix}. Supported: {supported}"
            )
        return self.readers[suffix]

    def load(self, path: Path) -> Volume3D | VideoClip:
        """Load one volume or clip.

        Args:
            path: File or frame directory

        Returns:
            Parsed sample
        """
        reader = self.reader_for(path)
        logger.debug("loading_sample", path=str(path), reader=reader.__class__.__name__)
        return reader.read(path)

    def save(self, sample: Volume3D | VideoClip, path: Path) -> Path:
        """Write one sample with the reader matching ``path``'s suffix."""
        suffix = ".nii.gz" if path.name.lower().endswith(".nii.gz") else path.suffix.lower()
        if suffix not in self.readers:
            raise UnsupportedFileFormatError(f"Unsupported sample format: {suffix}")
        return self.readers[suffix].write(sample, path)

    def get_supported_formats(self) -> list[str]:
        """Get list of all supported suffixes."""
        return list(self.readers.keys())
