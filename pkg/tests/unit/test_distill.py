"""Tests for label-matched pairing and the distillation objective."""

from collections import Counter

import numpy as np
import pytest
import torch

from app.core.exceptions import InvalidInputError, MissingLabelPoolError, ShapeMismatchError
from app.kd.distill.losses import KDSchedule, combined_loss, kd_loss
from app.kd.distill.pairing import MatchedPair, pair_by_label
from app.schemas.samples import ClassLabel

NEG, POS = ClassLabel.NEGATIVE, ClassLabel.POSITIVE


class TestPairing:
    def test_pairs_share_labels(self, make_mri, make_clips):
        mri = make_mri([POS, NEG, NEG, POS, NEG])
        pool = make_clips([NEG, POS, NEG, POS, NEG, NEG])
        pairs = pair_by_label(mri, pool, seed=0)
        assert [p.mri_sample.sample_id for p in pairs] == [s.sample_id for s in mri]
        for pair in pairs:
            assert pair.mri_sample.label == pair.tvus_sample.label == pair.shared_label

    def test_forced_pairing_with_singleton_pools(self, make_mri, make_clips):
        mri = make_mri([POS, NEG, POS])
        pool = make_clips([NEG, POS])
        pairs = pair_by_label(mri, pool, seed=5)
        assert [p.tvus_sample.sample_id for p in pairs] == ["tvus-0001", "tvus-0000", "tvus-0001"]

    def test_seed_and_epoch_determinism(self, make_mri, make_clips):
        mri = make_mri([POS, NEG] * 10)
        pool = make_clips([POS, NEG] * 10)

        def ids(seed, epoch):
            return [p.tvus_sample.sample_id for p in pair_by_label(mri, pool, seed, epoch)]

        assert ids(3, 1) == ids(3, 1)
        assert ids(3, 1) != ids(3, 2)
        assert ids(3, 1) != ids(4, 1)

    def test_draws_are_uniform_over_same_label_clips(self, make_mri, make_clips):
        mri = make_mri([POS])
        pool = make_clips([POS, POS, POS, POS, NEG])
        counts = Counter(
            pair_by_label(mri, pool, seed=0, epoch=e)[0].tvus_sample.sample_id
            for e in range(1, 10_001)
        )
        assert set(counts) == {"tvus-0000", "tvus-0001", "tvus-0002", "tvus-0003"}
        np.testing.assert_allclose(np.array(list(counts.values())), 2500, atol=150)

    def test_labels_match_on_random_batches(self, make_mri, make_clips):
        rng = np.random.default_rng(42)
        mri = make_mri([POS, NEG] * 8)
        pool = make_clips([POS, NEG] * 8)
        for trial in range(10_000):
            batch = [mri[i] for i in rng.choice(16, size=int(rng.integers(1, 9)), replace=False)]
            clips = [pool[i] for i in rng.choice(16, size=int(rng.integers(2, 17)), replace=False)]
            pool_labels = {c.label for c in clips}
            if not {s.label for s in batch} <= pool_labels:
                with pytest.raises(MissingLabelPoolError):
                    pair_by_label(batch, clips, seed=trial)
                continue
            allowed = {c.sample_id for c in clips}
            for pair in pair_by_label(batch, clips, seed=trial, epoch=int(rng.integers(1, 50))):
                assert pair.tvus_sample.label == pair.mri_sample.label
                assert pair.tvus_sample.sample_id in allowed

    def test_missing_label_pool(self, make_mri, make_clips):
        with pytest.raises(MissingLabelPoolError) as exc_info:
            pair_by_label(make_mri([POS, NEG]), make_clips([NEG, NEG]), seed=0)
        assert exc_info.value.details["missing"] == ["positive"]

    def test_cross_label_pair_rejected(self, make_mri, make_clips):
        with pytest.raises(InvalidInputError):
            MatchedPair(
                mri_sample=make_mri([POS])[0],
                tvus_sample=make_clips([NEG])[0],
                shared_label=POS,
            )


class TestKDLoss:
    def test_zero_for_equal_outputs(self):
        probs = torch.tensor([[0.3, 0.7], [0.9, 0.1]])
        assert kd_loss(probs, probs.clone()).item() == 0.0

    def test_opposite_one_hots_cost_two(self):
        teacher = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        student = torch.tensor([[0.0, 1.0], [1.0, 0.0]])
        assert kd_loss(teacher, student).item() == pytest.approx(2.0)

    def test_worked_example(self):
        teacher = torch.tensor([[0.9, 0.1]], dtype=torch.float64)
        student = torch.tensor([[0.6, 0.4]], dtype=torch.float64)
        assert kd_loss(teacher, student).item() == pytest.approx(0.6, abs=1e-12)

    def test_bounded_on_random_simplex_points(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            p = torch.from_numpy(rng.dirichlet([1.0, 1.0], size=4))
            q = torch.from_numpy(rng.dirichlet([1.0, 1.0], size=4))
            value = kd_loss(p, q).item()
            assert 0.0 <= value <= 2.0 + 1e-12
            assert value == pytest.approx(kd_loss(q, p).item(), abs=1e-12)

    def test_gradient_flows_only_to_student(self):
        teacher = torch.tensor([[0.8, 0.2]])
        logits = torch.zeros(1, 2, requires_grad=True)
        kd_loss(teacher, torch.softmax(logits, dim=-1)).backward()
        assert logits.grad is not None and logits.grad.abs().sum() > 0

    def test_teacher_with_grad_rejected(self):
        teacher = torch.tensor([[0.5, 0.5]], requires_grad=True)
        with pytest.raises(InvalidInputError):
            kd_loss(teacher, torch.tensor([[0.5, 0.5]]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            kd_loss(torch.zeros(2, 2), torch.zeros(3, 2))


class TestSchedule:
    def test_weights_follow_alpha_power(self):
        schedule = KDSchedule(alpha=0.85)
        for epoch in range(1, 11):
            assert abs(schedule.kd_weight(epoch) - 0.85**epoch) < 1e-12
            assert abs(schedule.ce_weight(epoch) - (1 - 0.85**epoch)) < 1e-12

    def test_weight_decreases(self):
        schedule = KDSchedule(alpha=0.85)
        weights = [schedule.kd_weight(e) for e in range(1, 11)]
        assert all(a > b for a, b in zip(weights, weights[1:]))

    def test_epoch_before_first_rejected(self):
        with pytest.raises(InvalidInputError):
            KDSchedule().kd_weight(0)

    def test_zero_based_indexing(self):
        assert KDSchedule(alpha=0.5, epoch_index_base=0).kd_weight(0) == 0.5

    def test_combined_loss(self):
        schedule = KDSchedule(alpha=0.85)
        assert combined_loss(1.0, 0.0, schedule, 1) == pytest.approx(0.85)
        assert combined_loss(0.0, 1.0, schedule, 2) == pytest.approx(1 - 0.85**2)
        kd, ce = torch.tensor(0.4), torch.tensor(0.2)
        torch.testing.assert_close(
            combined_loss(kd, ce, schedule, 3), 0.85**3 * kd + (1 - 0.85**3) * ce
        )
