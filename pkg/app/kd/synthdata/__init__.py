"""Deterministic phantom data standing in for the clinical datasets."""

from app.kd.synthdata.datasets import (
    DatasetManifests,
    PhantomDatasets,
    gen_datasets,
    sample_id,
    write_datasets,
)
from app.kd.synthdata.phantoms import gen_clip, gen_volume
