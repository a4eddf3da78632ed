"""Cross-validated ROC AUC evaluation and the ablation report."""

from app.kd.evaluation.cross_validation import (
    FoldPredictions,
    FoldResult,
    RowResult,
    cross_validate,
)
from app.kd.evaluation.metrics import AucSummary, roc_auc, roc_curve_points, summarize
from app.kd.evaluation.report import report, write_results
