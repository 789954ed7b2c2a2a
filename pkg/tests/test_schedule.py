from __future__ import annotations

import numpy as np
import pytest
import torch

from deblurkit import schedule


@pytest.fixture(scope="module")
def sched():
    return schedule.make_schedule(T_max=1000, beta_start=0.00085, beta_end=0.012,
                                  spacing="scaled_linear")


class TestMakeSchedule:
    def test_scaled_linear_decreasing_tail(self, sched):
        # independent cumulative product
        betas = np.linspace(0.00085**0.5, 0.012**0.5, 1000) ** 2
        expected = np.cumprod(1.0 - betas)
        assert np.allclose(sched.alpha_bar[1:], expected)
        assert np.all(np.diff(sched.alpha_bar) < 0)
        assert sched.alpha_bar[1000] < 0.01

    def test_alpha_bar_zero_is_one(self, sched):
        assert sched.alpha_bar[0] == 1.0

    def test_constant_beta_closed_form(self):
        s = schedule.make_schedule(T_max=10, beta_start=0.1, beta_end=0.1, spacing="linear")
        assert np.isclose(s.alpha_bar[10], 0.9**10)

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            schedule.make_schedule(beta_start=0.5, beta_end=0.1)
        with pytest.raises(ValueError):
            schedule.make_schedule(beta_start=0.0, beta_end=0.1)
        with pytest.raises(ValueError):
            schedule.make_schedule(spacing="cosine")


class TestEffectiveEpsilon:
    def test_equal_latents_identity(self, sched):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(4, 8, 8))
        t = 137
        ab = sched.alpha_bar[t]
        eps = schedule.effective_epsilon(z, z, t, sched)
        expected = z * (1 - np.sqrt(ab)) / np.sqrt(1 - ab)
        assert np.allclose(eps, expected)

    def test_zero_clean_latent(self, sched):
        rng = np.random.default_rng(1)
        z_t = rng.normal(size=(4, 8, 8))
        t = 200
        eps = schedule.effective_epsilon(z_t, np.zeros_like(z_t), t, sched)
        assert np.allclose(eps, z_t / np.sqrt(1 - sched.alpha_bar[t]))

    def test_t_zero_rejected(self, sched):
        z = np.zeros((2, 2))
        with pytest.raises(ValueError):
            schedule.effective_epsilon(z, z, 0, sched)

    def test_roundtrip(self, sched):
        rng = np.random.default_rng(2)
        for t in (1, 37, 200, 999):
            z0 = rng.normal(size=(3, 8, 8))
            z_t = rng.normal(size=(3, 8, 8))
            eps = schedule.effective_epsilon(z_t, z0, t, sched)
            back = schedule.recover_z0(z_t, eps, t, sched)
            assert np.max(np.abs(back - z0)) < 1e-5


class TestRecoverZ0:
    def test_zero_eps(self, sched):
        z_t = np.random.default_rng(3).normal(size=(4, 4))
        t = 42
        out = schedule.recover_z0(z_t, np.zeros_like(z_t), t, sched)
        assert np.allclose(out, z_t / np.sqrt(sched.alpha_bar[t]))

    def test_small_noise_limit(self, sched):
        z_t = np.random.default_rng(4).normal(size=(4, 4))
        eps = np.random.default_rng(5).normal(size=(4, 4))
        out = schedule.recover_z0(z_t, eps, 1, sched)
        # sqrt(1 - alpha_bar_1) ~ 0.03, so the correction stays small
        assert np.max(np.abs(out - z_t)) < 0.1

    def test_out_of_range_t(self, sched):
        z = np.zeros((2, 2))
        with pytest.raises(ValueError):
            schedule.recover_z0(z, z, 1001, sched)

    def test_batched_torch_t(self, sched):
        gen = torch.Generator().manual_seed(0)
        z_t = torch.randn(3, 4, 8, 8, generator=gen, dtype=torch.float64)
        eps = torch.randn(3, 4, 8, 8, generator=gen, dtype=torch.float64)
        ts = np.array([80.0, 200.0, 280.0])
        out = schedule.recover_z0(z_t, eps, ts, sched)
        for i, t in enumerate(ts):
            single = schedule.recover_z0(z_t[i : i + 1], eps[i : i + 1], float(t), sched)
            assert torch.allclose(out[i : i + 1], single)

    def test_fractional_t_interpolates(self, sched):
        z_t = np.ones((2, 2))
        mid = schedule.recover_z0(z_t, np.zeros_like(z_t), 200.5, sched)
        lo = schedule.recover_z0(z_t, np.zeros_like(z_t), 200, sched)
        hi = schedule.recover_z0(z_t, np.zeros_like(z_t), 201, sched)
        assert np.all((mid > np.minimum(lo, hi)) & (mid < np.maximum(lo, hi)))


class TestPosteriorMean:
    def test_transport_identity_over_schedule(self, sched):
        # the posterior mean maps the noise-free forward trajectory onto
        # itself: mu(sqrt(ab_t) z, z) == sqrt(ab_{t-1}) z exactly, for every t
        z0 = np.ones((1,))
        for t in range(1, sched.T_max + 1):
            z_t = np.sqrt(sched.alpha_bar[t]) * z0
            mu = schedule.posterior_mean(z_t, z0, t, sched)
            assert abs(float(mu[0]) - np.sqrt(sched.alpha_bar[t - 1])) < 1e-6

    def test_coefficients_sum_near_one_early(self, sched):
        # the plain coefficient sum is 1 - (1-sqrt(a))(1-sqrt(ab_prev))/(1+...),
        # which stays within 1e-6 of 1 only while alpha_bar is still near 1
        ones = np.ones((1,))
        for t in (1, 2, 3):
            mu = schedule.posterior_mean(ones, ones, t, sched)
            assert abs(float(mu[0]) - 1.0) < 1e-6

    def test_zero_inputs(self, sched):
        zero = np.zeros((3, 3))
        assert np.all(schedule.posterior_mean(zero, zero, 17, sched) == 0.0)

    def test_t1_collapses_to_z0(self, sched):
        rng = np.random.default_rng(6)
        z1 = rng.normal(size=(4, 4))
        z0 = rng.normal(size=(4, 4))
        mu = schedule.posterior_mean(z1, z0, 1, sched)
        assert np.allclose(mu, z0)

    def test_out_of_range(self, sched):
        z = np.zeros((2, 2))
        with pytest.raises(ValueError):
            schedule.posterior_mean(z, z, 0, sched)
