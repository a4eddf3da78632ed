"""
Results files and the ablation table.

``results.csv`` holds one record per (method, fold); ``predictions.csv`` the
held-out scores behind it. The table and ROC plots are rendered from those
two files only.
"""

import re
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from app.core.exceptions import EvaluationError  # noqa: E402
from app.core.logging import get_logger  # noqa: E402
from app.kd.evaluation.cross_validation import RowResult  # noqa: E402
from app.kd.evaluation.metrics import roc_curve_points, summarize  # noqa: E402
from app.schemas.experiment import TEACHER_ROW_LABEL, AblationRow  # noqa: E402
from app.schemas.samples import ClassLabel  # noqa: E402

logger = get_logger(__name__)

RESULTS_FILE = "results.csv"
PREDICTIONS_FILE = "predictions.csv"
TABLE_TEXT_FILE = "table.txt"
TABLE_CSV_FILE = "table.csv"
ROC_DIR = "roc"

RESULT_COLUMNS = ["method", "fold", "auc", "seed", "config_hash"]
PREDICTION_COLUMNS = ["method", "fold", "sample_id", "label", "score"]
TABLE_COLUMNS = ["Method", "Training modality", "Testing modality", "AUC"]

METHOD_ORDER = [TEACHER_ROW_LABEL] + [row.label for row in AblationRow]
MODALITIES = {TEACHER_ROW_LABEL: ("TVUS", "TVUS")} | {
    row.label: (row.training_modality, "MRI") for row in AblationRow
}


def _method_rank(method: str) -> int:
    return METHOD_ORDER.index(method) if method in METHOD_ORDER else len(METHOD_ORDER)


def _merge(path: Path, fresh: pd.DataFrame, columns: list[str]) -> pd.DataFrame:
    """Replace the records of every method in ``fresh``, keep the others."""
    if path.is_file():
        existing = pd.read_csv(path, dtype={"config_hash": str, "sample_id": str})
        existing = existing[~existing["method"].isin(fresh["method"].unique())]
        fresh = pd.concat([existing, fresh], ignore_index=True)
    fresh = fresh[columns].copy()
    fresh["_rank"] = fresh["method"].map(_method_rank)
    sort_keys = ["_rank", "method", "fold"] + (["sample_id"] if "sample_id" in columns else [])
    return fresh.sort_values(sort_keys, kind="mergesort").drop(columns="_rank").reset_index(drop=True)


def write_results(rows: Sequence[RowResult], out_dir: Path) -> Path:
    """Merge row outcomes into ``results.csv`` and ``predictions.csv``.

    Args:
        rows: Evaluated methods
        out_dir: Run directory

    Returns:
        Path of ``results.csv``
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    results = pd.DataFrame(
        [record.model_dump() for row in rows for record in row.folds], columns=RESULT_COLUMNS
    )
    predictions = pd.DataFrame(
        [
            {
                "method": row.method,
                "fold": pred.fold,
                "sample_id": sample_id,
                "label": label.value,
                "score": score,
            }
            for row in rows
            for pred in row.predictions
            if pred.fold not in row.skipped_folds
            for sample_id, label, score in zip(pred.sample_ids, pred.labels, pred.scores)
        ],
        columns=PREDICTION_COLUMNS,
    )

    results_path = out_dir / RESULTS_FILE
    _merge(results_path, results, RESULT_COLUMNS).to_csv(
        results_path, index=False, lineterminator="\n"
    )
    _merge(out_dir / PREDICTIONS_FILE, predictions, PREDICTION_COLUMNS).to_csv(
        out_dir / PREDICTIONS_FILE, index=False, lineterminator="\n"
    )
    logger.info("results_written", path=str(results_path), methods=[r.method for r in rows])
    return results_path


def _slug(method: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", method.lower()).strip("_")


def build_table(results: pd.DataFrame) -> pd.DataFrame:
    """One row per evaluated method; methods without records are omitted."""
    records = []
    for method, group in results.groupby("method", sort=False):
        summary = summarize(group.sort_values("fold")["auc"].tolist())
        training, testing = MODALITIES.get(method, ("MRI", "MRI"))
        records.append(
            {
                "Method": method,
                "Training modality": training,
                "Testing modality": testing,
                "AUC": summary.format(),
                "auc_mean": summary.mean,
                "auc_std": summary.std,
                "n_folds": summary.n,
            }
        )
    table = pd.DataFrame(records)
    table["_rank"] = table["Method"].map(_method_rank)
    return table.sort_values(["_rank", "Method"], kind="mergesort").drop(columns="_rank").reset_index(drop=True)


def render_text_table(table: pd.DataFrame) -> str:
    """Plain-text table with the four printed columns."""
    cells = [TABLE_COLUMNS] + table[TABLE_COLUMNS].astype(str).values.tolist()
    widths = [max(len(row[i]) for row in cells) for i in range(len(TABLE_COLUMNS))]
    lines = []
    for index, row in enumerate(cells):
        lines.append("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())
        if index == 0:
            lines.append("  ".join("-" * width for width in widths))
    return "\n".join(lines) + "\n"


def plot_roc_curves(predictions: pd.DataFrame, out_dir: Path) -> list[Path]:
    """One ROC plot per (method, fold)."""
    roc_dir = out_dir / ROC_DIR
    roc_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for (method, fold), group in predictions.groupby(["method", "fold"], sort=True):
        labels = [ClassLabel(v) for v in group["label"]]
        fpr, tpr = roc_curve_points(group["score"].tolist(), labels)
        fig, ax = plt.subplots(figsize=(4, 4))
        ax.plot(fpr, tpr, drawstyle="steps-post", label=method)
        ax.plot([0, 1], [0, 1], linestyle="--", color="grey", linewidth=0.8)
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.set_title(f"{method}, fold {fold}")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        fig.tight_layout()
        path = roc_dir / f"{_slug(method)}_fold{int(fold)}.png"
        fig.savefig(path, dpi=100, metadata={"Software": None})
        plt.close(fig)
        written.append(path)
    return written


def report(run_dir: Path) -> Path:
    """Render the ablation table and ROC plots from a run's results files.

    Args:
        run_dir: Run directory holding ``results.csv`` and ``predictions.csv``

    Returns:
        Path of the plain-text table

    Raises:
        EvaluationError: If no method has been evaluated yet
    """
    results_path = run_dir / RESULTS_FILE
    if not results_path.is_file():
        raise EvaluationError(
            f"No {RESULTS_FILE} in {run_dir}; run `podkd evaluate` first",
        )
    results = pd.read_csv(results_path, dtype={"config_hash": str})
    if results.empty:
        raise EvaluationError(f"{results_path} holds no evaluated method")

    table = build_table(results)
    text_path = run_dir / TABLE_TEXT_FILE
    text_path.write_text(render_text_table(table), encoding="utf-8")
    table.to_csv(run_dir / TABLE_CSV_FILE, index=False, lineterminator="\n")

    predictions_path = run_dir / PREDICTIONS_FILE
    plots: list[Path] = []
    if predictions_path.is_file():
        predictions = pd.read_csv(predictions_path, dtype={"sample_id": str})
        if not predictions.empty:
            plots = plot_roc_curves(predictions, run_dir)

    logger.info("report_written", table=str(text_path), methods=len(table), plots=len(plots))
    return text_path
