"""
Command-line entry point: ``podkd <subcommand> --config <file>``.
"""

import argparse
import sys
from pathlib import Path
from typing import Sequence

from app import __version__
from app.core.config import settings
from app.core.exceptions import (
    CheckpointError,
    ConfigurationError,
    DataError,
    PipelineError,
)
from app.core.logging import (
    add_run_log_file,
    clear_run_context,
    configure_logging,
    get_logger,
)
from app.kd.pipeline import MATRIX_ROWS, RUN_LOG_FILE, DistillationPipeline
from app.schemas.experiment import AblationRow, ExperimentConfig

logger = get_logger(__name__)

# Exit codes by error family; anything else is 1.
EXIT_CODES: tuple[tuple[type[PipelineError], int], ...] = (
    (ConfigurationError, 2),
    (CheckpointError, 3),
    (DataError, 4),
)

SUBCOMMANDS = (
    "synth",
    "pretrain-mae",
    "train-teacher",
    "finetune",
    "distill",
    "evaluate",
    "report",
)


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one sub-parser per stage."""
    parser = argparse.ArgumentParser(
        prog="podkd",
        description="Unpaired TVUS-to-MRI knowledge distillation pipeline",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", type=Path, required=True, help="Experiment YAML")
        sub.add_argument("--seed", type=int, default=None, help="Override the config seed")
        sub.add_argument(
            "--out-dir",
            type=Path,
            default=None,
            help="Run directory (default: $OUTPUT_ROOT/<experiment>)",
        )
        if name in ("train-teacher", "finetune", "distill", "evaluate"):
            sub.add_argument("--fold", type=int, default=None, help="Run a single fold")
            sub.add_argument(
                "--force",
                action="store_true",
                help="Accept upstream checkpoints built from a different config",
            )
        if name in ("finetune", "distill", "evaluate"):
            sub.add_argument(
                "--row",
                choices=[r.value for r in AblationRow],
                default=None,
                help="Ablation row (default: the config's ablation selector)",
            )
        if name == "evaluate":
            sub.add_argument(
                "--matrix",
                action="store_true",
                help="Evaluate the teacher and every ablation row on shared folds",
            )
            sub.add_argument("--jobs", type=int, default=1, help="Parallel fold workers")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Load the YAML config and apply command-line overrides."""
    config = ExperimentConfig.from_yaml(args.config)
    if args.seed is not None:
        config = config.with_overrides(seed=args.seed)
    return config


def run_command(args: argparse.Namespace) -> None:
    """Dispatch one parsed command."""
    config = load_config(args)
    run_dir = args.out_dir or settings.OUTPUT_ROOT / config.experiment
    add_run_log_file(run_dir / RUN_LOG_FILE)

    pipeline = DistillationPipeline(
        config,
        run_dir,
        force=getattr(args, "force", False),
        jobs=getattr(args, "jobs", 1),
    )
    pipeline.prepare_run_dir()
    logger.info("command_started", command=args.command, run_dir=str(run_dir), seed=config.seed)

    row_value = getattr(args, "row", None)
    row = AblationRow(row_value) if row_value else config.ablation
    folds = pipeline.fold_indices(getattr(args, "fold", None))

    if args.command == "synth":
        manifests = pipeline.synthesize()
        print(f"Wrote datasets: {manifests.pretrain}, {manifests.mri}, {manifests.tvus}")

    elif args.command == "pretrain-mae":
        checkpoint = pipeline.pretrain_mae()
        print(f"MAE checkpoint: {checkpoint.path}")

    elif args.command == "train-teacher":
        for fold in folds:
            checkpoint = pipeline.train_teacher(fold)
            print(f"Teacher fold {fold}: {checkpoint.path}")

    elif args.command == "finetune":
        if not row.uses_finetune:
            raise ConfigurationError(f"Ablation row '{row.value}' has no fine-tuning stage")
        for fold in folds:
            checkpoint = pipeline.finetune(fold, use_mae=row.uses_mae)
            print(f"Fine-tuned fold {fold}: {checkpoint.path}")

    elif args.command == "distill":
        if not row.uses_kd:
            raise ConfigurationError(f"Ablation row '{row.value}' has no distillation stage")
        for fold in folds:
            checkpoint = pipeline.distill(fold, row)
            print(f"Distilled fold {fold}: {checkpoint.path}")

    elif args.command == "evaluate":
        if args.matrix:
            results = pipeline.evaluate(MATRIX_ROWS, include_teacher=True, fold=args.fold)
        else:
            results = pipeline.evaluate([row], fold=args.fold)
        for result in results:
            print(f"{result.method}: AUC {result.summary.format()} over {result.summary.n} folds")

    elif args.command == "report":
        path = pipeline.report()
        print(path.read_text(encoding="utf-8"), end="")


def exit_code(error: PipelineError) -> int:
    """Process exit code for a pipeline error."""
    for family, code in EXIT_CODES:
        if isinstance(error, family):
            return code
    return 1


def main(argv: Sequence[str] | None = None) -> int:
    """Run the CLI.

    Args:
        argv: Arguments without the program name; defaults to ``sys.argv[1:]``

    Returns:
        Process exit code
    """
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        run_command(args)
    except PipelineError as e:
        logger.error(
            "command_failed",
            command=args.command,
            exception_type=e.__class__.__name__,
            message=e.message,
            details=e.details,
        )
        print(f"error: {e.message}", file=sys.stderr)
        return exit_code(e)
    finally:
        clear_run_context()
    return 0


if __name__ == "__main__":
    sys.exit(main())
