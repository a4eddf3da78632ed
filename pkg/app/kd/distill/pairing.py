"""
Label-matched pairing of unpaired MRI volumes with TVUS clips.
"""

from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from app.core.exceptions import InvalidInputError, MissingLabelPoolError
from app.schemas.samples import ClassLabel, LabeledSample


class MatchedPair(BaseModel):
    """An MRI sample and a TVUS clip sharing one class label."""

    model_config = ConfigDict(frozen=True)

    mri_sample: LabeledSample
    tvus_sample: LabeledSample
    shared_label: ClassLabel

    @model_validator(mode="after")
    def validate_labels(self) -> "MatchedPair":
        if not (self.mri_sample.label == self.tvus_sample.label == self.shared_label):
            raise InvalidInputError(
                f"Pair ({self.mri_sample.sample_id}, {self.tvus_sample.sample_id}) "
                "crosses class labels"
            )
        return self


def pair_by_label(
    mri_batch: Sequence[LabeledSample],
    tvus_pool: Sequence[LabeledSample],
    seed: int,
    epoch: int = 1,
) -> list[MatchedPair]:
    """Pair each MRI sample with a random clip of the same label.

    Clips are drawn uniformly with replacement from the same-label pool.
    The draw depends only on ``(seed, epoch)`` and the input order.

    Args:
        mri_batch: Labeled volumes
        tvus_pool: Labeled clips
        seed: Base seed
        epoch: Epoch index; each epoch reshuffles

    Returns:
        One pair per MRI sample, in input order

    Raises:
        MissingLabelPoolError: If the pool lacks a label present in the batch
    """
    pools: dict[ClassLabel, list[LabeledSample]] = {label: [] for label in ClassLabel}
    for clip in tvus_pool:
        if clip.label is None:
            raise InvalidInputError(f"Pool clip {clip.sample_id} is unlabeled")
        pools[clip.label].append(clip)

    needed = {s.label for s in mri_batch}
    if None in needed:
        raise InvalidInputError("Every MRI sample needs a label for pairing")
    missing = sorted(label.value for label in needed if label is not None and not pools[label])
    if missing:
        raise MissingLabelPoolError(
            f"TVUS pool has no clip labeled {', '.join(missing)}",
            details={"missing": missing},
        )

    rng = np.random.default_rng([seed, epoch])
    pairs = []
    for sample in mri_batch:
        label = ClassLabel(sample.label)
        candidates = pools[label]
        clip = candidates[int(rng.integers(len(candidates)))]
        pairs.append(MatchedPair(mri_sample=sample, tvus_sample=clip, shared_label=label))
    return pairs
