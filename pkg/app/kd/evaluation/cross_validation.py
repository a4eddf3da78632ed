"""
Cross-validated scoring of one method: per-fold predictions, AUC and summary.
"""

import warnings
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

from pydantic import BaseModel, ConfigDict, Field

from app.core.exceptions import EvaluationError
from app.core.logging import get_logger
from app.kd.evaluation.metrics import AucSummary, roc_auc, summarize
from app.schemas.samples import ClassLabel

logger = get_logger(__name__)


class FoldPredictions(BaseModel):
    """Held-out scores of one fold."""

    model_config = ConfigDict(frozen=True)

    fold: int = Field(..., ge=0)
    sample_ids: list[str]
    labels: list[ClassLabel]
    scores: list[float]
    config_hash: str = ""

    @property
    def has_both_classes(self) -> bool:
        """True when the fold can be scored by AUC."""
        return len(set(self.labels)) == 2


class FoldResult(BaseModel):
    """One (method, fold) record of the results file."""

    model_config = ConfigDict(frozen=True)

    method: str
    fold: int
    auc: float
    seed: int
    config_hash: str


class RowResult(BaseModel):
    """Cross-validated outcome of one method."""

    model_config = ConfigDict(frozen=True)

    method: str
    training_modality: str
    testing_modality: str
    folds: list[FoldResult] = Field(default_factory=list)
    predictions: list[FoldPredictions] = Field(default_factory=list)
    skipped_folds: list[int] = Field(default_factory=list)

    @property
    def aucs(self) -> list[float]:
        """Scored fold AUCs in fold order."""
        return [f.auc for f in self.folds]

    @property
    def summary(self) -> AucSummary:
        """Mean and sample std over scored folds."""
        return summarize(self.aucs)


FoldEvaluator = Callable[[int], FoldPredictions]


def cross_validate(
    method: str,
    evaluate_fold: FoldEvaluator,
    folds: Sequence[int],
    seed: int,
    training_modality: str = "MRI",
    testing_modality: str = "MRI",
    jobs: int = 1,
) -> RowResult:
    """Train-and-score every fold, then aggregate AUCs.

    Args:
        method: Method label
        evaluate_fold: Trains what fold ``f`` needs on the other folds and
            returns scores on fold ``f``; must be picklable when ``jobs > 1``
        folds: Fold indices to evaluate
        seed: Experiment seed, recorded per fold
        training_modality: Modalities seen in training
        testing_modality: Modality scored
        jobs: Parallel worker processes

    Returns:
        Per-fold results, skipping folds with a single class

    Raises:
        EvaluationError: If no fold could be scored
    """
    if jobs > 1 and len(folds) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(folds))) as executor:
            predictions = list(executor.map(evaluate_fold, folds))
    else:
        predictions = [evaluate_fold(fold) for fold in folds]

    results: list[FoldResult] = []
    skipped: list[int] = []
    for pred in predictions:
        if not pred.has_both_classes:
            message = f"{method}: test fold {pred.fold} holds a single class; skipped"
            warnings.warn(message, UserWarning, stacklevel=2)
            logger.warning("fold_skipped", method=method, fold=pred.fold, n_test=len(pred.labels))
            skipped.append(pred.fold)
            continue
        auc = roc_auc(pred.scores, pred.labels)
        logger.info("fold_scored", method=method, fold=pred.fold, auc=auc, n_test=len(pred.labels))
        results.append(
            FoldResult(
                method=method, fold=pred.fold, auc=auc, seed=seed, config_hash=pred.config_hash
            )
        )

    if not results:
        raise EvaluationError(f"No fold of '{method}' could be scored", details={"skipped": skipped})

    row = RowResult(
        method=method,
        training_modality=training_modality,
        testing_modality=testing_modality,
        folds=results,
        predictions=predictions,
        skipped_folds=skipped,
    )
    summary = row.summary
    logger.info("method_evaluated", method=method, auc_mean=summary.mean, auc_std=summary.std, n_folds=summary.n)
    return row
