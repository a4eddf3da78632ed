"""Dataset ingestion: readers, manifests, preprocessing and fold splits."""

from app.kd.ingestion.loader import DatasetLoader
from app.kd.ingestion.manifest import ManifestEntry, read_manifest, write_manifest
from app.kd.ingestion.preprocessing import (
    clahe_3d,
    crop_roi,
    filter_min_slices,
    normalize_minmax,
    preprocess_volume,
    resample_isotropic,
    resize_clip,
    standardize_clip,
)
from app.kd.ingestion.splits import stratified_kfold
