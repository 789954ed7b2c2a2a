from __future__ import annotations

import numpy as np
import pytest
import torch

from deblurkit import denoiser
from gradcheck import finite_diff_param_check


@pytest.fixture(scope="module")
def small_model():
    cfg = denoiser.DenoiserConfig(in_channels=3, widths=(16, 24, 32), blocks_per_level=1)
    return denoiser.make_denoiser(cfg, seed=0)


class TestForward:
    def test_fresh_model_outputs_zero(self, small_model):
        z = torch.randn(2, 3, 8, 8, generator=torch.Generator().manual_seed(1))
        out = small_model(z, torch.tensor([200.0, 80.0]))
        assert torch.all(out == 0.0)

    def test_deterministic(self, small_model):
        gen = torch.Generator().manual_seed(2)
        z = torch.randn(1, 3, 16, 16, generator=gen)
        t = torch.tensor([120.0])
        with torch.no_grad():
            a = small_model(z, t)
            b = small_model(z, t)
        assert torch.equal(a, b)

    @pytest.mark.parametrize("size", [8, 16, 32, 64])
    def test_resolution_equivariant(self, small_model, size):
        z = torch.randn(1, 3, size, size, generator=torch.Generator().manual_seed(3))
        out = small_model(z, torch.tensor([200.0]))
        assert out.shape == z.shape

    def test_rectangular_input(self, small_model):
        z = torch.randn(1, 3, 8, 16, generator=torch.Generator().manual_seed(4))
        assert small_model(z, torch.tensor([50.0])).shape == z.shape

    def test_channel_mismatch_rejected(self, small_model):
        with pytest.raises(ValueError):
            small_model(torch.randn(1, 4, 8, 8), torch.tensor([10.0]))

    def test_t_out_of_range_rejected(self, small_model):
        z = torch.randn(1, 3, 8, 8)
        with pytest.raises(ValueError):
            small_model(z, torch.tensor([1001.0]))

    def test_forward_counter(self, small_model):
        before = small_model.forward_calls
        small_model(torch.randn(1, 3, 8, 8), torch.tensor([5.0]))
        assert small_model.forward_calls == before + 1

    def test_residual_count_contract(self, small_model):
        z = torch.randn(1, 3, 8, 8)
        with pytest.raises(ValueError):
            small_model(z, torch.tensor([10.0]), control_residuals=[torch.zeros(1, 16, 8, 8)])

    def test_zero_residuals_bit_identical(self, small_model):
        # shapes per level for an 8x8 input: (16, 8, 8), (24, 4, 4), (32, 2, 2)
        z = torch.randn(1, 3, 8, 8, generator=torch.Generator().manual_seed(5))
        t = torch.tensor([100.0])
        residuals = [
            torch.zeros(1, 16, 8, 8),
            torch.zeros(1, 24, 4, 4),
            torch.zeros(1, 32, 2, 2),
        ]
        with torch.no_grad():
            plain = small_model(z, t)
            conditioned = small_model(z, t, control_residuals=residuals)
        assert torch.equal(plain, conditioned)


class TestTimeEmbedding:
    def test_continuous_t_changes_output_smoothly(self):
        emb1 = denoiser.sinusoidal_embedding(torch.tensor([200.0]), 128)
        emb2 = denoiser.sinusoidal_embedding(torch.tensor([200.1]), 128)
        emb3 = denoiser.sinusoidal_embedding(torch.tensor([280.0]), 128)
        assert torch.norm(emb1 - emb2) < torch.norm(emb1 - emb3)

    def test_defined_at_zero(self):
        emb = denoiser.sinusoidal_embedding(torch.tensor([0.0]), 64)
        assert torch.all(torch.isfinite(emb))

    def test_prompt_embedding_shifts_output(self, small_model):
        # break the zero-init anchor so the prompt has a visible effect
        torch.manual_seed(9)
        model = denoiser.make_denoiser(
            denoiser.DenoiserConfig(in_channels=3, widths=(16, 24, 32), blocks_per_level=1),
            seed=9,
        )
        with torch.no_grad():
            model.out_conv.weight.normal_(0, 0.1)
        z = torch.randn(1, 3, 8, 8, generator=torch.Generator().manual_seed(6))
        t = torch.tensor([60.0])
        with torch.no_grad():
            base = model(z, t)
            model.prompt.add_(1.0)
            shifted = model(z, t)
        assert not torch.equal(base, shifted)


class TestGradients:
    def test_params_match_finite_differences(self):
        cfg = denoiser.DenoiserConfig(in_channels=3, widths=(8, 16, 16), blocks_per_level=1)
        model = denoiser.make_denoiser(cfg, seed=7).double()
        with torch.no_grad():  # zero-init head would kill most gradients
            model.out_conv.weight.normal_(0, 0.05, generator=torch.Generator().manual_seed(8))
        gen = torch.Generator().manual_seed(9)
        z = torch.randn(1, 3, 8, 8, generator=gen, dtype=torch.float64)
        t = torch.tensor([150.0], dtype=torch.float64)
        w = torch.randn(1, 3, 8, 8, generator=gen, dtype=torch.float64)

        def loss_fn():
            return (model(z, t) * w).sum()

        params = [p for p in model.parameters() if p.requires_grad]
        checked = finite_diff_param_check(loss_fn, params, n_samples=3, seed=1)
        assert checked > 50
