"""
Phantom datasets: an unlabeled pre-training pool, labeled volumes and
labeled clips drawn from independent index streams, written in the
on-disk formats the ingestion layer reads.
"""

from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.core.logging import get_logger
from app.core.reproducibility import derive_seed
from app.kd.ingestion.loader import DatasetLoader
from app.kd.ingestion.manifest import ManifestEntry, write_manifest
from app.kd.synthdata.phantoms import CLIP_STREAM, gen_clip, gen_volume
from app.schemas.phantom import PhantomSpec
from app.schemas.samples import ClassLabel, LabeledSample

logger = get_logger(__name__)

ID_PREFIXES = {"pretrain": "pre", "mri": "mri", "tvus": "tvus"}


class PhantomDatasets(BaseModel):
    """The three generated sets."""

    model_config = ConfigDict(frozen=True)

    pretrain: list[LabeledSample]
    mri: list[LabeledSample]
    tvus: list[LabeledSample]


class DatasetManifests(BaseModel):
    """Manifest paths of written datasets."""

    model_config = ConfigDict(frozen=True)

    pretrain: Path
    mri: Path
    tvus: Path


def sample_id(stream: str, index: int) -> str:
    """Stable id such as ``mri-0007``."""
    return f"{ID_PREFIXES[stream]}-{index:04d}"


def stream_labels(spec: PhantomSpec, stream: str, n: int) -> list[ClassLabel]:
    """Exactly ``spec.positive_count(n)`` positives in a seeded order."""
    positives = spec.positive_count(n)
    labels = np.array([1] * positives + [0] * (n - positives))
    rng = np.random.default_rng(derive_seed(spec.seed, "phantom", stream, "labels"))
    return [ClassLabel.from_index(int(i)) for i in rng.permutation(labels)]


def gen_datasets(spec: PhantomSpec) -> PhantomDatasets:
    """Generate the pre-training pool, labeled volumes and labeled clips.

    The pre-training pool mixes both classes but carries no labels. The
    labeled volumes and clips use separate index streams, so no volume and
    clip share randomness.

    Args:
        spec: Phantom spec

    Returns:
        In-memory datasets
    """
    pretrain_labels = stream_labels(spec, "pretrain", spec.n_unlabeled)
    pretrain = [
        LabeledSample(
            sample_id=sample_id("pretrain", i),
            modality="mri",
            data=gen_volume(label, spec, i, stream="pretrain"),
        )
        for i, label in enumerate(pretrain_labels)
    ]
    mri = [
        LabeledSample(
            sample_id=sample_id("mri", i),
            modality="mri",
            data=gen_volume(label, spec, i, stream="mri"),
            label=label,
        )
        for i, label in enumerate(stream_labels(spec, "mri", spec.n_volumes))
    ]
    tvus = [
        LabeledSample(
            sample_id=sample_id(CLIP_STREAM, i),
            modality="tvus",
            data=gen_clip(label, spec, i),
            label=label,
        )
        for i, label in enumerate(stream_labels(spec, CLIP_STREAM, spec.n_clips))
    ]

    logger.info(
        "phantoms_generated",
        n_unlabeled=len(pretrain),
        n_volumes=len(mri),
        n_clips=len(tvus),
        mri_positives=sum(s.label is ClassLabel.POSITIVE for s in mri),
        tvus_positives=sum(s.label is ClassLabel.POSITIVE for s in tvus),
        mri_snr=spec.mri_snr,
        tvus_snr=spec.tvus_snr,
    )
    return PhantomDatasets(pretrain=pretrain, mri=mri, tvus=tvus)


def write_datasets(
    datasets: PhantomDatasets,
    root: Path,
    manifest_names: tuple[str, str, str] = ("pretrain.csv", "mri.csv", "tvus.csv"),
) -> DatasetManifests:
    """Write volumes as NIfTI, clips as ``.npy`` and one manifest per set.

    Args:
        datasets: Generated sets
        root: Dataset directory
        manifest_names: File names of the pretrain, MRI and TVUS manifests

    Returns:
        Manifest paths
    """
    loader = DatasetLoader()
    paths = {}
    sets = {"pretrain": datasets.pretrain, "mri": datasets.mri, "tvus": datasets.tvus}
    for (stream, samples), manifest_name in zip(sets.items(), manifest_names):
        suffix = ".npy" if stream == CLIP_STREAM else ".nii"
        entries = []
        for sample in samples:
            path = loader.save(sample.data, root / stream / f"{sample.sample_id}{suffix}")
            entries.append(
                ManifestEntry(
                    sample_id=sample.sample_id,
                    path=path,
                    label=sample.label,
                    modality=sample.modality,
                )
            )
        paths[stream] = write_manifest(entries, root / manifest_name)
        logger.info("manifest_written", stream=stream, path=str(paths[stream]), n=len(entries))
    return DatasetManifests(**paths)
