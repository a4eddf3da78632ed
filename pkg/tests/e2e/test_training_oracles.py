"""Slow training oracles: the full ablation matrix and learnability checks.

Run with ``pytest -m slow``.
"""

import numpy as np
import pandas as pd
import pytest

from app.infrastructure.storage import CheckpointStore
from app.kd.evaluation import roc_auc
from app.kd.ingestion.preprocessing import normalize_minmax, standardize_clip
from app.kd.mae.trainer import load_mae, pretrain_mae, reconstruction_error
from app.kd.pipeline import MATRIX_ROWS, DistillationPipeline
from app.kd.student.model import build_student
from app.kd.student.trainer import finetune_student
from app.kd.synthdata import gen_clip, gen_volume
from app.kd.teacher.trainer import load_teacher, predict_clips, train_teacher
from app.schemas.checkpoint import Stage
from app.schemas.experiment import TEACHER_ROW_LABEL, AblationRow
from app.schemas.phantom import PhantomSpec
from app.schemas.samples import ClassLabel, LabeledSample, VideoClip

pytestmark = pytest.mark.slow

NEG, POS = ClassLabel.NEGATIVE, ClassLabel.POSITIVE


def _override(config, section: str, **values):
    return config.with_overrides(**{section: {**getattr(config, section).model_dump(), **values}})


def _phantom_clips(spec: PhantomSpec, labels, start: int) -> list[LabeledSample]:
    return [
        LabeledSample(
            sample_id=f"tvus-{start + i:04d}",
            modality="tvus",
            data=standardize_clip(gen_clip(label, spec, start + i)),
            label=label,
        )
        for i, label in enumerate(labels)
    ]


def _drifting_clips(labels, seed: int, dims=(16, 16, 8)) -> list[LabeledSample]:
    """Sinusoidal texture moving right (positive) or left (negative)."""
    rng = np.random.default_rng(seed)
    height, width, frames = dims
    x = np.arange(width, dtype=np.float64)
    samples = []
    for i, label in enumerate(labels):
        freq = rng.integers(1, 3)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        speed = rng.uniform(1.0, 2.0) * (1.0 if label is POS else -1.0)
        rows = np.stack(
            [np.sin(2.0 * np.pi * freq * (x - speed * t) / width + phase) for t in range(frames)],
            axis=-1,
        )
        data = np.broadcast_to(rows, dims) + 0.1 * rng.standard_normal(dims)
        samples.append(
            LabeledSample(
                sample_id=f"tvus-{i:04d}",
                modality="tvus",
                data=VideoClip(frames=data),
                label=label,
            )
        )
    return samples


def _accuracy(outputs, samples) -> float:
    return float(np.mean([o.predicted is s.label for o, s in zip(outputs, samples)]))


def test_full_matrix(tiny_config, tmp_path):
    pipeline = DistillationPipeline(tiny_config, tmp_path / "run")
    pipeline.prepare_run_dir()
    pipeline.synthesize()
    results = pipeline.evaluate(MATRIX_ROWS, include_teacher=True)

    assert [r.method for r in results] == [TEACHER_ROW_LABEL] + [row.label for row in MATRIX_ROWS]
    for result in results:
        assert len(result.aucs) + len(result.skipped_folds) == 3
        assert all(0.0 <= auc <= 1.0 for auc in result.aucs)

    pipeline.report()
    table = pd.read_csv(tmp_path / "run" / "table.csv")
    assert table["Method"].tolist() == [TEACHER_ROW_LABEL] + [row.label for row in MATRIX_ROWS]
    # one MAE run is shared by every row and fold
    assert pipeline.store.epochs(Stage.MAE) == [1, 2]


class TestMaskedAutoencoder:
    def test_overfits_ten_volumes_in_200_steps(self, tiny_config, store):
        spec = PhantomSpec(volume_dims=(8, 8, 8), volume_spacing=(1.0, 1.0, 1.0), noise_std=0.0)
        volumes = [gen_volume(NEG, spec, i) for i in range(10)]
        config = _override(
            tiny_config, "mae", epochs=200, batch_size=10, lr=3e-3, checkpoint_every=200
        )
        result = pretrain_mae(volumes, config, store)

        initial = result.losses[0]
        assert np.mean(result.losses[-10:]) <= 0.1 * initial
        trained = load_mae(result.checkpoint)
        assert reconstruction_error(trained, volumes, mask_seed=0) <= 0.1 * initial


class TestTeacher:
    def test_separates_phantom_clips(self, tiny_config, store):
        spec = PhantomSpec(clip_dims=(16, 16, 8), tvus_snr=10.5, noise_std=0.1, seed=3)
        train = _phantom_clips(spec, [POS, NEG] * 80, start=0)
        test = _phantom_clips(spec, [POS, NEG] * 30, start=1000)
        config = _override(
            tiny_config, "teacher", epochs=40, batch_size=16, lr=1e-3, checkpoint_every=40
        )
        teacher = load_teacher(train_teacher(train, config, store).checkpoint)

        outputs = predict_clips(teacher, [s.data for s in test])
        assert roc_auc([o.positive for o in outputs], [s.label for s in test]) >= 0.95

    def test_frame_shuffle_drops_accuracy_to_chance(self, tiny_config, store):
        train = _drifting_clips([POS, NEG] * 32, seed=0)
        test = _drifting_clips([POS, NEG] * 50, seed=1)
        config = _override(
            tiny_config, "teacher", epochs=30, batch_size=8, lr=1e-3, checkpoint_every=30
        )
        teacher = load_teacher(train_teacher(train, config, store).checkpoint)

        rng = np.random.default_rng(2)
        shuffled = [
            VideoClip(frames=s.data.frames[..., rng.permutation(s.data.frames.shape[-1])])
            for s in test
        ]
        ordered_accuracy = _accuracy(predict_clips(teacher, [s.data for s in test]), test)
        shuffled_accuracy = _accuracy(predict_clips(teacher, shuffled), test)
        assert ordered_accuracy >= 0.9
        assert abs(shuffled_accuracy - 0.5) <= 0.2


class TestStudent:
    def test_finetune_fits_eight_volumes(self, tiny_config, tiny_student, store):
        spec = PhantomSpec(volume_dims=(8, 8, 8), volume_spacing=(1.0, 1.0, 1.0), mri_snr=4.0)
        labels = [POS, NEG] * 4
        samples = [
            LabeledSample(
                sample_id=f"mri-{i:04d}",
                modality="mri",
                data=normalize_minmax(gen_volume(label, spec, i)),
                label=label,
            )
            for i, label in enumerate(labels)
        ]
        config = _override(tiny_config, "finetune", epochs=50, batch_size=2)
        result = finetune_student(samples, build_student(None, tiny_student), config, store)
        assert max(r.metrics["train_accuracy"] for r in result.history) == 1.0

    def test_mae_init_reaches_loss_threshold_sooner(self, tiny_config, tmp_path):
        threshold = 0.35
        encoder = {
            "input_dims": (16, 16, 16),
            "patch_size": 4,
            "embed_dim": 32,
            "depth": 2,
            "num_heads": 4,
        }
        base = tiny_config.with_overrides(
            data={**tiny_config.data.model_dump(), "clahe": {"enabled": False}},
            mae={
                **tiny_config.mae.model_dump(),
                "epochs": 40,
                "batch_size": 16,
                "checkpoint_every": 40,
                "encoder": encoder,
                "decoder": {"embed_dim": 16, "depth": 1, "num_heads": 2},
            },
            finetune={
                **tiny_config.finetune.model_dump(),
                "epochs": 30,
                "batch_size": 4,
                "select_epoch": 30,
                "adapter_dim": 32,
            },
            synth={
                **tiny_config.synth.model_dump(),
                "n_unlabeled": 96,
                "n_volumes": 24,
                "mri_snr": 1.5,
                "volume_dims": (16, 16, 8),
            },
        )

        def epochs_to_threshold(losses: list[float]) -> int:
            reached = (i + 1 for i, loss in enumerate(losses) if loss <= threshold)
            return next(reached, len(losses) + 1)

        from_mae, from_scratch = [], []
        for seed in range(5):
            config = base.with_overrides(
                seed=seed, synth={**base.synth.model_dump(), "seed": seed}
            )
            pipeline = DistillationPipeline(config, tmp_path / f"seed_{seed}")
            pipeline.prepare_run_dir()
            pipeline.synthesize()
            mae_checkpoint = pipeline.pretrain_mae()
            labeled = pipeline.mri_samples()
            store = CheckpointStore(tmp_path / f"seed_{seed}" / "comparison")
            for init, epochs in ((mae_checkpoint, from_mae), (None, from_scratch)):
                model = build_student(init, config.student)
                scope = "mae" if init is not None else "scratch"
                result = finetune_student(labeled, model, config, store, scope=scope)
                epochs.append(epochs_to_threshold(result.losses))

        assert np.mean(from_mae) < np.mean(from_scratch)


def test_baseline_auc_grows_with_mri_signal(tiny_config, tmp_path):
    base = tiny_config.with_overrides(
        data={**tiny_config.data.model_dump(), "clahe": {"enabled": False}},
        finetune={**tiny_config.finetune.model_dump(), "epochs": 15, "select_epoch": 15},
        synth={**tiny_config.synth.model_dump(), "n_volumes": 24},
    )
    means = []
    for snr in (0.0, 2.0, 6.0):
        aucs = []
        for seed in range(5):
            config = base.with_overrides(
                seed=seed, synth={**base.synth.model_dump(), "seed": seed, "mri_snr": snr}
            )
            pipeline = DistillationPipeline(config, tmp_path / f"snr_{snr}_seed_{seed}")
            pipeline.prepare_run_dir()
            pipeline.synthesize()
            (result,) = pipeline.evaluate([AblationRow.SCRATCH])
            aucs.append(result.summary.mean)
        means.append(float(np.mean(aucs)))

    assert means[0] <= means[1] <= means[2]
