"""
NIfTI volume reader implementation.
"""

from pathlib import Path

import nibabel as nib
import numpy as np

from app.core.exceptions import DatasetParsingError
from app.core.logging import get_logger
from app.domain.interfaces.sample_reader import SampleReader
from app.schemas.samples import VideoClip, Volume3D

logger = get_logger(__name__)


class NiftiVolumeReader(SampleReader):
    """Reads and writes single-channel NIfTI volumes with voxel spacing."""

    def read(self, path: Path) -> Volume3D:
        """Read a NIfTI volume.

        Args:
            path: Path to a .nii or .nii.gz file

        Returns:
            Volume with spacing taken from the header zooms

        Raises:
            DatasetParsingError: If the file cannot be parsed
        """
        try:
            image = nib.load(str(path))
            data = np.asarray(image.get_fdata(dtype=np.float32))
            if data.ndim == 4 and data.shape[3] == 1:
                data = data[..., 0]
            zooms = tuple(float(z) for z in image.header.get_zooms()[:3])
            volume = Volume3D(data=data, spacing=zooms)
        except Exception as e:
            logger.error("nifti_parsing_failed", path=str(path), error=str(e))
            raise DatasetParsingError(f"Failed to read NIfTI {path}: {e}") from e

        logger.debug("nifti_read", path=str(path), shape=volume.shape, spacing=volume.spacing)
        return volume

    def write(self, sample: Volume3D | VideoClip, path: Path) -> Path:
        """Write a volume with a diagonal affine carrying its spacing."""
        if not isinstance(sample, Volume3D):
            raise DatasetParsingError("NIfTI writer only accepts volumes")
        path.parent.mkdir(parents=True, exist_ok=True)
        affine = np.diag([*sample.spacing, 1.0])
        image = nib.Nifti1Image(np.asarray(sample.data, dtype=np.float32), affine)
        image.header.set_zooms(sample.spacing)
        nib.save(image, str(path))
        return path

    @property
    def supported_formats(self) -> list[str]:
        """Get list of supported suffixes."""
        return [".nii", ".nii.gz"]
