"""Stage trainers on toy data: checkpoints, histories and invariants."""

import pytest
import torch

from app.core.exceptions import InvalidInputError, MissingLabelPoolError, SingleClassError
from app.core.reproducibility import parameter_digest, state_dict_digest
from app.infrastructure.storage import CheckpointStore
from app.kd.distill.trainer import distill_train
from app.kd.mae.trainer import load_mae, pretrain_mae, reconstruction_error
from app.kd.student.model import build_student
from app.kd.student.trainer import finetune_student, student_predict
from app.kd.teacher.freeze import freeze
from app.kd.teacher.trainer import teacher_predict, train_teacher
from app.schemas.checkpoint import Stage
from app.schemas.experiment import AblationRow
from app.schemas.samples import ClassLabel

NEG, POS = ClassLabel.NEGATIVE, ClassLabel.POSITIVE
LABELS = [POS, NEG] * 4


@pytest.fixture
def teacher_checkpoint(tiny_config, store, make_clips):
    return train_teacher(make_clips(LABELS), tiny_config, store, fold=0, scope="fold_0").checkpoint


class TestPretrainMAE:
    def test_checkpoints_and_history(self, tiny_config, store, make_volumes):
        result = pretrain_mae(make_volumes(8), tiny_config, store)
        assert [r.epoch for r in result.history] == [1, 2]
        assert store.epochs(Stage.MAE) == [1, 2]
        assert result.checkpoint.manifest.config_hash == tiny_config.stage_hash(Stage.MAE)
        assert all(r.loss > 0 for r in result.history)
        assert "raw_loss" in result.history[0].metrics

    def test_reload(self, tiny_config, store, make_volumes):
        volumes = make_volumes(4)
        result = pretrain_mae(volumes, tiny_config, store)
        model = load_mae(result.checkpoint)
        assert reconstruction_error(model, volumes, mask_seed=0) > 0

    def test_deterministic(self, tiny_config, tmp_path, make_volumes):
        volumes = make_volumes(8)
        first = pretrain_mae(volumes, tiny_config, CheckpointStore(tmp_path / "a"))
        second = pretrain_mae(volumes, tiny_config, CheckpointStore(tmp_path / "b"))
        assert first.losses == second.losses
        assert state_dict_digest(CheckpointStore.load_state(first.checkpoint)) == state_dict_digest(
            CheckpointStore.load_state(second.checkpoint)
        )

    def test_empty_dataset(self, tiny_config, store):
        with pytest.raises(InvalidInputError):
            pretrain_mae([], tiny_config, store)


class TestTrainTeacher:
    def test_checkpoint_and_prediction(self, tiny_config, teacher_checkpoint, make_clips):
        assert teacher_checkpoint.stage is Stage.TEACHER
        assert teacher_checkpoint.manifest.fold == 0
        assert teacher_checkpoint.manifest.architecture["teacher"]["depth"] == 10
        out = teacher_predict(make_clips([POS])[0].data, teacher_checkpoint)
        assert sum(out.probs) == pytest.approx(1.0)

    def test_single_class_rejected(self, tiny_config, store, make_clips):
        with pytest.raises(SingleClassError):
            train_teacher(make_clips([POS] * 4), tiny_config, store)


class TestFinetune:
    def test_every_epoch_checkpointed_and_all_weights_move(
        self, tiny_config, store, make_mri
    ):
        model = build_student(None, tiny_config.student)
        before = {n: p.detach().clone() for n, p in model.named_parameters()}
        result = finetune_student(make_mri(LABELS), model, tiny_config, store, scope="random/fold_0")
        assert store.epochs(Stage.STUDENT_FT, "random/fold_0") == [1, 2, 3]
        for name, param in model.named_parameters():
            assert not torch.equal(before[name], param.detach()), name
        out = student_predict(make_mri([NEG])[0].data, result.checkpoint)
        assert sum(out.probs) == pytest.approx(1.0)


class TestDistill:
    def test_schedule_history_and_frozen_teacher(
        self, tiny_config, store, teacher_checkpoint, make_mri, make_clips
    ):
        frozen = freeze(teacher_checkpoint)
        digest = frozen.digest
        result = distill_train(
            make_mri(LABELS),
            make_clips(LABELS, seed=1),
            frozen,
            None,
            tiny_config,
            store,
            fold=0,
            scope="kd_only/fold_0",
            row=AblationRow.KD_ONLY,
        )
        weights = [r.metrics["kd_weight"] for r in result.history]
        assert weights == pytest.approx([0.85, 0.85**2], abs=1e-12)
        for record in result.history:
            assert 0.0 <= record.metrics["kd_loss"] <= 2.0
            assert record.loss == pytest.approx(
                record.metrics["kd_weight"] * record.metrics["kd_loss"]
                + (1 - record.metrics["kd_weight"]) * record.metrics["ce_loss"],
                rel=1e-6,
            )
        assert parameter_digest(frozen.model) == digest
        assert result.checkpoint.stage is Stage.DISTILLED

    def test_starts_from_finetuned_student(
        self, tiny_config, store, teacher_checkpoint, make_mri, make_clips
    ):
        model = build_student(None, tiny_config.student)
        ft = finetune_student(make_mri(LABELS), model, tiny_config, store, scope="mae/fold_0")
        result = distill_train(
            make_mri(LABELS),
            make_clips(LABELS),
            teacher_checkpoint,
            ft.checkpoint,
            tiny_config,
            store,
            scope="mae_pt+kd+ft/fold_0",
        )
        assert len(result.history) == tiny_config.distill.epochs

    def test_missing_label_pool(self, tiny_config, store, teacher_checkpoint, make_mri, make_clips):
        with pytest.raises(MissingLabelPoolError):
            distill_train(
                make_mri(LABELS), make_clips([NEG] * 4), teacher_checkpoint, None, tiny_config, store
            )
