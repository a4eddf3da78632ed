"""Tests for the ``podkd`` command line."""

import logging

import pytest
import yaml

from app.cli import build_parser, exit_code, main
from app.core.exceptions import (
    CheckpointNotFoundError,
    ConfigValidationError,
    EvaluationError,
    InvalidVolumeError,
    MissingLabelPoolError,
    TrainingDivergedError,
)
from app.kd.pipeline import MATRIX_ROWS
from app.schemas.experiment import AblationRow


@pytest.fixture(autouse=True)
def _drop_log_handlers():
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        if handler.get_name() in ("podkd-console", "podkd-run-log"):
            root.removeHandler(handler)
            handler.close()


@pytest.fixture
def config_file(tiny_config, tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(tiny_config.to_yaml(), encoding="utf-8")
    return path


def _run(command, config_file, out_dir, *extra) -> int:
    return main([command, "--config", str(config_file), "--out-dir", str(out_dir), *extra])


class TestParser:
    def test_subcommands(self):
        parser = build_parser()
        args = parser.parse_args(["evaluate", "--config", "c.yaml", "--matrix", "--fold", "1"])
        assert args.command == "evaluate"
        assert args.matrix and args.fold == 1

    def test_unknown_row_rejected(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["distill", "--config", "c.yaml", "--row", "mae"])


class TestCommands:
    def test_synth_is_reproducible(self, config_file, tmp_path):
        assert _run("synth", config_file, tmp_path / "a") == 0
        assert _run("synth", config_file, tmp_path / "b") == 0
        first, second = tmp_path / "a" / "data", tmp_path / "b" / "data"
        assert {p.name for p in first.glob("*.csv")} == {"pretrain.csv", "mri.csv", "tvus.csv"}
        files = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
        for rel in files:
            assert (first / rel).read_bytes() == (second / rel).read_bytes()

    def test_seed_override_recorded(self, config_file, tmp_path):
        assert _run("synth", config_file, tmp_path / "run", "--seed", "7") == 0
        resolved = yaml.safe_load((tmp_path / "run" / "resolved_config.yaml").read_text())
        assert resolved["seed"] == 7

    def test_run_log_written(self, config_file, tmp_path):
        assert _run("synth", config_file, tmp_path / "run") == 0
        assert (tmp_path / "run" / "logs" / "run.jsonl").is_file()


class TestExitCodes:
    def test_missing_key(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("seed: 1\n", encoding="utf-8")
        assert _run("synth", bad, tmp_path / "run") == 2
        assert "experiment" in capsys.readouterr().err

    def test_fold_out_of_range(self, config_file, tmp_path, capsys):
        assert _run("train-teacher", config_file, tmp_path / "run", "--fold", "5") == 2
        assert "--fold 5" in capsys.readouterr().err

    def test_distill_without_teacher(self, config_file, tmp_path, capsys):
        assert _run("distill", config_file, tmp_path / "run", "--fold", "0") == 3
        assert "podkd train-teacher" in capsys.readouterr().err

    def test_finetune_on_row_without_finetuning(self, config_file, tmp_path):
        assert _run("finetune", config_file, tmp_path / "run", "--row", "kd_only") == 2

    def test_missing_data(self, config_file, tmp_path, capsys):
        assert _run("pretrain-mae", config_file, tmp_path / "run") == 4
        assert "podkd synth" in capsys.readouterr().err

    def test_report_before_evaluate(self, config_file, tmp_path):
        assert _run("report", config_file, tmp_path / "run") == 1

    @pytest.mark.parametrize(
        "error,code",
        [
            (ConfigValidationError("bad key"), 2),
            (CheckpointNotFoundError("no teacher"), 3),
            (MissingLabelPoolError("no positives"), 4),
            (TrainingDivergedError("nan loss"), 1),
            (InvalidVolumeError("flat"), 1),
            (EvaluationError("no folds"), 1),
        ],
    )
    def test_codes_by_error_family(self, error, code):
        assert exit_code(error) == code


class TestDispatch:
    def test_matrix_evaluates_every_row_with_teacher(self, config_file, tmp_path, mocker):
        evaluate = mocker.patch("app.cli.DistillationPipeline.evaluate", return_value=[])
        assert _run("evaluate", config_file, tmp_path / "run", "--matrix", "--fold", "1") == 0
        evaluate.assert_called_once_with(MATRIX_ROWS, include_teacher=True, fold=1)

    def test_row_selector(self, config_file, tmp_path, mocker):
        evaluate = mocker.patch("app.cli.DistillationPipeline.evaluate", return_value=[])
        assert _run("evaluate", config_file, tmp_path / "run", "--row", "kd_only") == 0
        evaluate.assert_called_once_with([AblationRow.KD_ONLY], fold=None)
