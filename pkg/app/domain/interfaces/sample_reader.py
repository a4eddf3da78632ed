"""
Abstract interface for volume and clip readers.
"""

from abc import ABC, abstractmethod
from pathlib import Path

from app.schemas.samples import VideoClip, Volume3D


class SampleReader(ABC):
    """Abstract interface for on-disk sample readers."""

    @abstractmethod
    def read(self, path: Path) -> Volume3D | VideoClip:
        """Read one sample.

        Args:
            path: File or directory holding the sample

        Returns:
            Parsed volume or clip
        """
        pass

    @abstractmethod
    def write(self, sample: Volume3D | VideoClip, path: Path) -> Path:
        """Write one sample in this reader's format.

        Args:
            sample: Volume or clip
            path: Target path

        Returns:
            Path actually written
        """
        pass

    def supports_format(self, suffix: str) -> bool:
        """Check if reader supports a file suffix.

        Args:
            suffix: Suffix such as '.nii.gz' or '' for a frame directory

        Returns:
            True if format is supported
        """
        return suffix.lower() in self.supported_formats

    @property
    @abstractmethod
    def supported_formats(self) -> list[str]:
        """Get list of supported suffixes.

        Returns:
            List of supported suffixes
        """
        pass
