"""
Stratified k-fold splitting with persisted assignments.
"""

import warnings
from collections import Counter
from typing import Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold

from app.core.exceptions import InvalidInputError, SingleClassError
from app.core.logging import get_logger
from app.schemas.folds import FoldSplit
from app.schemas.samples import ClassLabel

logger = get_logger(__name__)


def stratified_kfold(
    labels: Sequence[ClassLabel],
    k: int = 5,
    seed: int = 0,
    sample_ids: Sequence[str] | None = None,
) -> FoldSplit:
    """Split labeled samples into ``k`` stratified folds.

    Fold sizes differ by at most one, and so do per-class counts per fold.

    Args:
        labels: Label of every sample
        k: Number of folds
        seed: Shuffle seed
        sample_ids: Stable ids; defaults to the string positions "0", "1", ...

    Returns:
        Fold assignment for every sample

    Raises:
        InvalidInputError: If k < 2, ids and labels disagree, or k exceeds the sample count
        SingleClassError: If only one class is present
    """
    if k < 2:
        raise InvalidInputError(f"k must be >= 2, got {k}")
    ids = list(sample_ids) if sample_ids is not None else [str(i) for i in range(len(labels))]
    if len(ids) != len(labels):
        raise InvalidInputError(
            f"{len(ids)} sample ids for {len(labels)} labels",
        )
    if len(set(ids)) != len(ids):
        raise InvalidInputError("Sample ids must be unique")

    y = np.array([ClassLabel(label).index for label in labels], dtype=np.int64)
    counts = Counter(y.tolist())
    if len(counts) < 2:
        raise SingleClassError("Stratified splitting needs both classes present")

    smallest = min(counts.values())
    if smallest < k:
        message = (
            f"The least populated class has only {smallest} members, fewer than "
            f"k={k}; some folds will lack that class"
        )
        warnings.warn(message, UserWarning, stacklevel=2)
        logger.warning("small_class_in_split", smallest=smallest, k=k)

    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    assignments: dict[str, int] = {}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            for fold, (_, held_out) in enumerate(splitter.split(np.zeros(len(y)), y)):
                for index in held_out:
                    assignments[ids[index]] = fold
    except ValueError as e:
        raise InvalidInputError(f"Cannot split {len(y)} samples into {k} folds: {e}") from e

    split = FoldSplit(k=k, seed=seed, fold_assignments=assignments)
    logger.info(
        "folds_created",
        k=k,
        seed=seed,
        n_samples=len(ids),
        fold_sizes=split.fold_sizes(),
    )
    return split
