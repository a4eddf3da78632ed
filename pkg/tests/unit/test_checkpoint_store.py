"""Tests for checkpoint persistence and selection."""

import json

import pytest
import torch

from app.core.exceptions import (
    CheckpointNotFoundError,
    StageMismatchError,
    StaleArtifactError,
)
from app.infrastructure.storage import CheckpointStore, require_fresh, require_stage
from app.schemas.checkpoint import Stage


def _save(store: CheckpointStore, epoch: int, stage: Stage = Stage.MAE, **kwargs):
    state = {"w": torch.full((2, 2), float(epoch))}
    return store.save(stage, state, epoch=epoch, seed=3, config_hash="abc", **kwargs)


class TestCheckpointStore:
    def test_save_and_load_round_trip(self, store):
        checkpoint = _save(store, 5, scope="fold_0", fold=0, metrics={"loss": 0.5})
        reopened = store.open(checkpoint.path)
        assert reopened.manifest == checkpoint.manifest
        assert reopened.manifest.fold == 0
        state = store.load_state(reopened)
        torch.testing.assert_close(state["w"], torch.full((2, 2), 5.0))

    def test_manifest_is_plain_json(self, store):
        checkpoint = _save(store, 1)
        manifest = json.loads(checkpoint.manifest_path.read_text())
        for key in ("stage", "epoch", "seed", "config_hash", "created_at"):
            assert key in manifest
        assert manifest["stage"] == "mae"

    def test_select_exact_and_latest(self, store):
        for epoch in (5, 10, 15):
            _save(store, epoch)
        assert store.epochs(Stage.MAE) == [5, 10, 15]
        assert store.select(Stage.MAE, epoch=10).manifest.epoch == 10
        assert store.latest(Stage.MAE).manifest.epoch == 15

    def test_select_falls_back_to_earlier_epoch(self, store):
        for epoch in (5, 10, 15):
            _save(store, epoch)
        assert store.select(Stage.MAE, epoch=12).manifest.epoch == 10
        assert store.select(Stage.MAE, epoch=99).manifest.epoch == 15
        assert store.select(Stage.MAE, epoch=2).manifest.epoch == 5

    def test_scopes_are_independent(self, store):
        _save(store, 1, scope="fold_0")
        assert store.epochs(Stage.MAE, "fold_1") == []
        with pytest.raises(CheckpointNotFoundError):
            store.latest(Stage.MAE, "fold_1")

    def test_open_missing(self, store, tmp_path):
        with pytest.raises(CheckpointNotFoundError):
            store.open(tmp_path / "nowhere")


class TestGuards:
    def test_require_stage(self, store):
        checkpoint = _save(store, 1, stage=Stage.TEACHER)
        require_stage(checkpoint, Stage.TEACHER)
        with pytest.raises(StageMismatchError):
            require_stage(checkpoint, Stage.MAE, Stage.STUDENT_FT)

    def test_require_fresh(self, store):
        checkpoint = _save(store, 1)
        require_fresh(checkpoint, "abc")
        with pytest.raises(StaleArtifactError) as exc_info:
            require_fresh(checkpoint, "other")
        assert exc_info.value.details["recorded"] == "abc"
        require_fresh(checkpoint, "other", force=True)
