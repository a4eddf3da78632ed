"""
ROC AUC by the rank (Mann-Whitney) formulation and fold aggregation.
"""

import math
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.stats import rankdata
from sklearn.metrics import roc_curve

from app.core.exceptions import InvalidInputError, SingleClassError
from app.schemas.samples import ClassLabel


def _positive_mask(scores: Sequence[float], labels: Sequence[ClassLabel]) -> tuple[np.ndarray, np.ndarray]:
    if len(scores) != len(labels):
        raise InvalidInputError(f"{len(scores)} scores for {len(labels)} labels")
    values = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("Scores must be finite")
    positive = np.array([ClassLabel(label) is ClassLabel.POSITIVE for label in labels])
    if positive.all() or not positive.any():
        raise SingleClassError("ROC AUC needs both classes among the labels")
    return values, positive


def roc_auc(scores: Sequence[float], labels: Sequence[ClassLabel]) -> float:
    """Probability that a random positive outscores a random negative.

    Ties count one half.

    Args:
        scores: Positive-class scores
        labels: True labels

    Returns:
        AUC in [0, 1]

    Raises:
        SingleClassError: If only one class is present
    """
    values, positive = _positive_mask(scores, labels)
    ranks = rankdata(values, method="average")
    n_pos = int(positive.sum())
    n_neg = len(values) - n_pos
    u_statistic = float(ranks[positive].sum()) - n_pos * (n_pos + 1) / 2.0
    return u_statistic / (n_pos * n_neg)


def roc_curve_points(
    scores: Sequence[float], labels: Sequence[ClassLabel]
) -> tuple[np.ndarray, np.ndarray]:
    """False- and true-positive rates over every threshold."""
    values, positive = _positive_mask(scores, labels)
    fpr, tpr, _ = roc_curve(positive.astype(int), values, pos_label=1, drop_intermediate=False)
    return fpr, tpr


class AucSummary(BaseModel):
    """Mean and sample standard deviation of fold AUCs."""

    model_config = ConfigDict(frozen=True)

    mean: float
    std: float
    n: int

    def format(self, digits: int = 3) -> str:
        """``mean ± std`` as printed in the results table."""
        return f"{self.mean:.{digits}f} ± {self.std:.{digits}f}"


def summarize(aucs: Sequence[float]) -> AucSummary:
    """Aggregate fold AUCs; the std is the n-1 form and 0 for a single fold.

    Raises:
        InvalidInputError: If ``aucs`` is empty
    """
    if not aucs:
        raise InvalidInputError("Cannot summarise zero folds")
    values = np.asarray(aucs, dtype=np.float64)
    std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    mean = float(values.mean())
    if not math.isfinite(mean):
        raise InvalidInputError("Fold AUCs must be finite")
    return AucSummary(mean=mean, std=std, n=len(values))
