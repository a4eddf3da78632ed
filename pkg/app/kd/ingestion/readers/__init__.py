"""Sample readers keyed by on-disk format."""

from app.kd.ingestion.readers.clip_reader import FrameDirectoryReader, NumpyClipReader
from app.kd.ingestion.readers.nifti_reader import NiftiVolumeReader
