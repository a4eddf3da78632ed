"""Tests for the R(2+1)D teacher network and its frozen handle."""

import math

import pytest
import torch
import torch.nn.functional as F

from app.core.exceptions import ConfigurationError, FreezeViolationError, FrozenModelError
from app.kd.inference import predict_probabilities
from app.kd.teacher.freeze import FrozenTeacher
from app.kd.teacher.model import build_teacher, import_backbone_weights
from app.kd.training import build_optimizer
from app.schemas.architecture import TeacherConfig
from app.schemas.experiment import TeacherStageConfig


@pytest.fixture
def teacher(tiny_teacher):
    return build_teacher(tiny_teacher)


@pytest.fixture
def clips():
    return torch.randn(5, 1, 4, 8, 8)


class TestTeacherNetwork:
    @pytest.mark.parametrize("depth,layers", [(10, (1, 1, 1, 1)), (18, (2, 2, 2, 2)), (34, (3, 4, 6, 3))])
    def test_depth_layouts(self, depth, layers):
        assert TeacherConfig(depth=depth).layers == layers

    def test_logits_and_features(self, teacher, clips):
        teacher.eval()
        assert teacher(clips).shape == (5, 2)
        assert teacher.features(clips).shape == (5, 512)

    def test_probabilities_on_simplex(self, teacher, clips):
        probs = predict_probabilities(teacher, clips)
        assert probs.dtype == torch.float64
        assert torch.all(probs >= 0)
        torch.testing.assert_close(probs.sum(dim=-1), torch.ones(5, dtype=torch.float64))

    def test_eval_is_deterministic_and_batch_invariant(self, teacher, clips):
        together = predict_probabilities(teacher, clips, batch_size=5)
        again = predict_probabilities(teacher, clips, batch_size=5)
        one_by_one = predict_probabilities(teacher, clips, batch_size=1)
        assert torch.equal(together, again)
        torch.testing.assert_close(together, one_by_one, rtol=1e-5, atol=1e-6)

    def test_restores_training_mode(self, teacher, clips):
        teacher.train()
        predict_probabilities(teacher, clips)
        assert teacher.training

    def test_frame_order_matters(self, teacher, clips):
        forward = predict_probabilities(teacher, clips)
        reversed_frames = predict_probabilities(teacher, clips.flip(dims=[2]))
        assert not torch.equal(forward, reversed_frames)


class TestCrossEntropyReference:
    def test_uniform_prediction_costs_ln2(self):
        logits = torch.zeros(6, 2, dtype=torch.float64)
        labels = torch.tensor([0, 1, 0, 1, 0, 1])
        assert F.cross_entropy(logits, labels).item() == pytest.approx(math.log(2), abs=1e-9)

    def test_perfect_one_hot_costs_zero(self):
        target = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        assert float(-torch.xlogy(target, target).sum()) == 0.0

    def test_fresh_teacher_starts_near_ln2(self, teacher):
        clips = torch.randn(8, 1, 4, 8, 8)
        labels = torch.tensor([0, 1] * 4)
        teacher.train()
        with torch.no_grad():
            loss = F.cross_entropy(teacher(clips), labels)
        assert loss.item() == pytest.approx(math.log(2), abs=0.05)


class TestPretrainedImport:
    def test_stem_channels_are_summed(self, tmp_path):
        source = build_teacher(TeacherConfig(depth=10, in_channels=3))
        path = tmp_path / "r2plus1d.pt"
        torch.save(source.state_dict(), path)

        target = build_teacher(TeacherConfig(depth=10, in_channels=1))
        skipped = import_backbone_weights(target, str(path))
        assert skipped == []
        torch.testing.assert_close(
            target.backbone.stem[0].weight,
            source.backbone.stem[0].weight.sum(dim=1, keepdim=True),
        )
        torch.testing.assert_close(target.backbone.fc.weight, source.backbone.fc.weight)

    def test_kinetics_needs_18_layers(self, teacher):
        with pytest.raises(ConfigurationError):
            import_backbone_weights(teacher, "kinetics400")


class TestFrozenTeacher:
    def test_parameters_frozen(self, teacher):
        frozen = FrozenTeacher(teacher)
        assert not frozen.model.training
        assert all(not p.requires_grad for p in frozen.model.parameters())

    def test_train_mode_rejected(self, teacher):
        frozen = FrozenTeacher(teacher)
        frozen.train(False)
        with pytest.raises(FrozenModelError):
            frozen.train(True)

    def test_optimizer_over_frozen_parameters_rejected(self, teacher):
        frozen = FrozenTeacher(teacher)
        with pytest.raises(FrozenModelError):
            build_optimizer(frozen.model, TeacherStageConfig())

    def test_outputs_are_detached(self, teacher, clips):
        probs = FrozenTeacher(teacher).predict_proba(clips)
        assert not probs.requires_grad

    def test_verify_unchanged(self, teacher):
        frozen = FrozenTeacher(teacher)
        frozen.verify_unchanged()
        with torch.no_grad():
            next(frozen.model.parameters()).add_(1.0)
        with pytest.raises(FreezeViolationError):
            frozen.verify_unchanged()

    def test_regained_gradient_detected(self, teacher):
        frozen = FrozenTeacher(teacher)
        next(frozen.model.parameters()).requires_grad_(True)
        with pytest.raises(FreezeViolationError):
            frozen.verify_unchanged()
