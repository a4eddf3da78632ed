"""Tests for patching, masking, the 3D ViT encoder and the MAE objective."""

import numpy as np
import pytest
import torch
from torch.func import functional_call

from app.core.exceptions import InvalidInputError, ShapeMismatchError
from app.kd.mae.masking import PatchMask, masked_count, sample_mask
from app.kd.mae.model import MaskedAutoencoder3D, ViTEncoder3D, mae_forward, mae_loss
from app.kd.mae.patches import patchify, patchify_tensor, unpatchify, unpatchify_tensor
from app.kd.mae.position import sinusoidal_position_embedding_3d
from app.schemas.architecture import DecoderConfig, EncoderConfig
from app.schemas.samples import Volume3D


@pytest.fixture
def rng():
    return np.random.default_rng(42)


class TestPatches:
    def test_round_trip_is_exact(self, rng):
        vol = Volume3D(data=rng.standard_normal((8, 12, 4)), spacing=(1.0, 1.0, 2.0))
        seq = patchify(vol, 4)
        assert seq.num_patches == 2 * 3 * 1
        assert seq.patches.shape == (6, 64)
        back = unpatchify(seq)
        np.testing.assert_array_equal(back.data, vol.data)
        assert back.spacing == vol.spacing

    def test_patch_order_is_c_order(self):
        data = np.zeros((8, 8, 8))
        data[4:8, 0:4, 4:8] = 1.0
        seq = patchify(Volume3D(data=data), 4)
        # grid (2, 2, 2): cell (1, 0, 1) -> 1*4 + 0*2 + 1
        assert seq.patches[5].sum() == 64
        assert seq.patches.sum() == 64

    def test_tensor_matches_array(self, rng):
        vol = Volume3D(data=rng.standard_normal((8, 8, 8)))
        batch = torch.from_numpy(np.asarray(vol.data)).reshape(1, 1, 8, 8, 8)
        np.testing.assert_array_equal(patchify_tensor(batch, 4)[0].numpy(), patchify(vol, 4).patches)
        restored = unpatchify_tensor(patchify_tensor(batch, 4), (2, 2, 2), 4)
        assert torch.equal(restored, batch)

    def test_indivisible_dims(self, rng):
        with pytest.raises(ShapeMismatchError):
            patchify(Volume3D(data=rng.random((8, 8, 6))), 4)


class TestMasking:
    @pytest.mark.parametrize(
        "l_total,ratio,expected", [(512, 0.5, 256), (8, 0.5, 4), (7, 0.5, 4), (10, 0.25, 3)]
    )
    def test_masked_count(self, l_total, ratio, expected):
        assert masked_count(l_total, ratio) == expected
        assert sample_mask(l_total, ratio, 0).num_masked == expected

    def test_unique_sorted_in_range(self):
        for seed in range(50):
            mask = sample_mask(64, 0.75, seed)
            assert list(mask.masked_indices) == sorted(set(mask.masked_indices))
            assert all(0 <= i < 64 for i in mask.masked_indices)
            assert set(mask.visible_indices).isdisjoint(mask.masked_indices)
            assert len(mask.visible_indices) + mask.num_masked == 64

    def test_seed_determinism(self):
        assert sample_mask(512, 0.5, 7) == sample_mask(512, 0.5, 7)
        assert sample_mask(512, 0.5, 7) != sample_mask(512, 0.5, 8)

    def test_each_patch_masked_with_ratio_frequency(self):
        counts = np.zeros(8)
        for seed in range(10_000):
            counts[list(sample_mask(8, 0.5, seed).masked_indices)] += 1
        assert counts.sum() == 40_000
        np.testing.assert_allclose(counts, 5000, atol=200)

    def test_zero_ratio_is_empty(self):
        assert sample_mask(8, 0.0, 0).is_empty

    @pytest.mark.parametrize("ratio", [1.0, -0.1])
    def test_invalid_ratio(self, ratio):
        with pytest.raises(InvalidInputError):
            sample_mask(8, ratio, 0)

    def test_manual_mask_validated(self):
        with pytest.raises(InvalidInputError):
            PatchMask(masked_indices=(1, 1, 2, 3), ratio=0.5, l_total=8)


class TestPositionEmbedding:
    def test_shape_and_zero_remainder(self):
        table = sinusoidal_position_embedding_3d((2, 2, 2), 16)
        assert table.shape == (8, 16)
        # 16 // 6 * 2 = 4 channels per axis, 4 unused
        assert torch.all(table[:, 12:] == 0)

    def test_rows_are_distinct(self):
        table = sinusoidal_position_embedding_3d((2, 3, 4), 24)
        assert torch.unique(table, dim=0).shape[0] == 24

    def test_cls_row(self):
        table = sinusoidal_position_embedding_3d((2, 2, 2), 12, cls_token=True)
        assert table.shape == (9, 12)
        assert torch.all(table[0] == 0)


class TestEncoder:
    def test_token_shapes(self, tiny_encoder):
        encoder = ViTEncoder3D(tiny_encoder)
        x = torch.randn(3, 1, 8, 8, 8)
        assert encoder(x).shape == (3, 8, 12)
        assert encoder(x, torch.tensor([0, 2, 5])).shape == (3, 3, 12)
        assert encoder.forward_features(x).shape == (3, 12)

    def test_cls_pooling(self, tiny_encoder):
        encoder = ViTEncoder3D(tiny_encoder.model_copy(update={"pooling": "cls"}))
        x = torch.randn(2, 1, 8, 8, 8)
        assert encoder(x).shape == (2, 9, 12)
        assert encoder.forward_features(x).shape == (2, 12)

    def test_wrong_input_shape(self, tiny_encoder):
        encoder = ViTEncoder3D(tiny_encoder)
        with pytest.raises(ShapeMismatchError):
            encoder(torch.randn(2, 1, 8, 8, 4))


class TestMAELoss:
    def test_zero_for_perfect_reconstruction(self):
        x = torch.randn(2, 1, 8, 8, 8)
        mask = sample_mask(8, 0.5, 0)
        assert mae_loss(x, x.clone(), mask, 4).item() == 0.0

    def test_matches_manual_formula(self):
        x = torch.randn(3, 1, 8, 8, 8, dtype=torch.float64)
        y = torch.randn(3, 1, 8, 8, 8, dtype=torch.float64)
        mask = sample_mask(8, 0.5, 1)
        px, py = patchify_tensor(x, 4), patchify_tensor(y, 4)
        idx = list(mask.masked_indices)
        expected = ((px[:, idx] - py[:, idx]) ** 2).sum() / (len(idx) * 3)
        raw = mae_loss(x, y, mask, 4, per_voxel=False)
        torch.testing.assert_close(raw, expected)
        torch.testing.assert_close(mae_loss(x, y, mask, 4), expected / 64)

    def test_ignores_unmasked_positions(self):
        gen = torch.Generator().manual_seed(0)
        for trial in range(10_000):
            x = torch.randn(2, 1, 8, 8, 8, generator=gen)
            y = torch.randn(2, 1, 8, 8, 8, generator=gen)
            mask = sample_mask(8, 0.5, trial)
            perturbed = patchify_tensor(y, 4).clone()
            visible = list(mask.visible_indices)
            perturbed[:, visible] += torch.randn(2, len(visible), 64, generator=gen)
            y2 = unpatchify_tensor(perturbed, (2, 2, 2), 4)
            assert torch.equal(mae_loss(x, y, mask, 4), mae_loss(x, y2, mask, 4))

    def test_empty_mask_rejected(self):
        x = torch.randn(1, 1, 8, 8, 8)
        with pytest.raises(InvalidInputError):
            mae_loss(x, x, sample_mask(8, 0.0, 0), 4)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            mae_loss(torch.randn(1, 1, 8, 8, 8), torch.randn(2, 1, 8, 8, 8), sample_mask(8, 0.5, 0), 4)


class TestMaskedAutoencoder:
    def test_reconstruction_shape(self, tiny_encoder, tiny_decoder):
        model = MaskedAutoencoder3D(tiny_encoder, tiny_decoder, 0.5)
        x = torch.randn(2, 1, 8, 8, 8)
        recon, mask = mae_forward(model, x, 3)
        assert recon.shape == x.shape
        assert mask.num_masked == 4

    def test_mask_size_mismatch(self, tiny_encoder, tiny_decoder):
        model = MaskedAutoencoder3D(tiny_encoder, tiny_decoder)
        with pytest.raises(ShapeMismatchError):
            model(torch.randn(1, 1, 8, 8, 8), sample_mask(16, 0.5, 0))

    def test_gradient_reaches_encoder_through_masked_loss(self, tiny_encoder, tiny_decoder):
        model = MaskedAutoencoder3D(tiny_encoder, tiny_decoder)
        x = torch.randn(2, 1, 8, 8, 8)
        recon, mask = mae_forward(model, x, 0)
        mae_loss(x, recon, mask, 4).backward()
        assert model.encoder.patch_embed.weight.grad.abs().sum() > 0
        assert model.mask_token.grad.abs().sum() > 0


def _gradcheck_model() -> tuple[MaskedAutoencoder3D, torch.Tensor, PatchMask]:
    encoder = EncoderConfig(input_dims=(8, 8, 8), patch_size=4, embed_dim=16, depth=2, num_heads=2)
    decoder = DecoderConfig(embed_dim=8, depth=1, num_heads=2)
    model = MaskedAutoencoder3D(encoder, decoder, 0.5).double().train()
    x = torch.randn(2, 1, 8, 8, 8, dtype=torch.float64)
    return model, x, sample_mask(8, 0.5, 0)


def _check_params(names: list[str]) -> bool:
    model, x, mask = _gradcheck_model()
    params = dict(model.named_parameters())
    inputs = tuple(params[n].detach().clone().requires_grad_(True) for n in names)

    def loss_fn(*values: torch.Tensor) -> torch.Tensor:
        recon = functional_call(model, dict(zip(names, values)), (x, mask))
        return mae_loss(x, recon, mask, 4)

    return torch.autograd.gradcheck(loss_fn, inputs, eps=1e-6, atol=1e-5, rtol=1e-4)


class TestGradcheck:
    def test_selected_parameters(self):
        assert _check_params(
            ["encoder.patch_embed.weight", "mask_token", "decoder_pred.bias", "encoder.norm.weight"]
        )

    @pytest.mark.slow
    def test_every_parameter(self):
        model, _, _ = _gradcheck_model()
        assert _check_params([name for name, _ in model.named_parameters()])
