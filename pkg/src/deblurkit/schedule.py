"""Noise schedule and the closed-form timestep algebra.

Arrays are 1-indexed by timestep with index 0 reserved for the clean image:
alpha_bar[0] == 1, so t = 0 is the sharp frame, matching the frame-count
mapping g(1) = 0. The effective epsilon is defined so that
z_t = sqrt(alpha_bar_t) * z_0 + sqrt(1 - alpha_bar_t) * eps_hat
holds for blur-degraded latents even though eps_hat is not Gaussian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    T_max: int
    beta: np.ndarray  # length T_max + 1, beta[0] unused (0.0)
    alpha: np.ndarray
    alpha_bar: np.ndarray
    spacing: str
    beta_start: float
    beta_end: float

    def alpha_bar_at(self, t) -> np.ndarray:
        """alpha_bar at possibly fractional t, linearly interpolated."""
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0) or np.any(t > self.T_max):
            raise ValueError(f"t outside [0, {self.T_max}]")
        lo = np.floor(t).astype(int)
        hi = np.minimum(lo + 1, self.T_max)
        frac = t - lo
        return (1 - frac) * self.alpha_bar[lo] + frac * self.alpha_bar[hi]


def make_schedule(
    T_max: int = 1000,
    beta_start: float = 0.00085,
    beta_end: float = 0.012,
    spacing: str = "scaled_linear",
) -> NoiseSchedule:
    if not (0 < beta_start <= beta_end < 1):
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    if T_max < 1:
        raise ValueError(f"T_max must be >= 1, got {T_max}")
    if spacing == "linear":
        betas = np.linspace(beta_start, beta_end, T_max)
    elif spacing == "scaled_linear":
        betas = np.linspace(math.sqrt(beta_start), math.sqrt(beta_end), T_max) ** 2
    else:
        raise ValueError(f"unknown spacing {spacing!r}")
    beta = np.concatenate([[0.0], betas])
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    alpha_bar[0] = 1.0
    return NoiseSchedule(
        T_max=T_max,
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        spacing=spacing,
        beta_start=beta_start,
        beta_end=beta_end,
    )


def _check_t(t: int, sched: NoiseSchedule) -> None:
    if not 1 <= t <= sched.T_max:
        raise ValueError(f"t must be in [1, {sched.T_max}], got {t}")


def _coefficients(t, z, sched: NoiseSchedule):
    """sqrt(ab_t) and sqrt(1 - ab_t), shaped to broadcast against z.

    t is a scalar or a length-B vector matched to a (B, ...) batch; fractional
    values interpolate alpha_bar, supporting regressed timesteps without
    rounding.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 1.0) or np.any(t_arr > sched.T_max):
        raise ValueError(f"t must be in [1, {sched.T_max}], got {t}")
    ab = sched.alpha_bar_at(t_arr)
    sqrt_ab = np.sqrt(ab)
    sqrt_om = np.sqrt(1.0 - ab)
    if t_arr.ndim == 0:
        return float(sqrt_ab), float(sqrt_om)
    if t_arr.shape[0] != z.shape[0]:
        raise ValueError(f"per-item t length {t_arr.shape[0]} != batch size {z.shape[0]}")
    shape = (-1,) + (1,) * (z.ndim - 1)
    if hasattr(z, "device"):  # torch tensor
        import torch

        return (
            torch.from_numpy(sqrt_ab).to(z.dtype).reshape(shape),
            torch.from_numpy(sqrt_om).to(z.dtype).reshape(shape),
        )
    return sqrt_ab.reshape(shape), sqrt_om.reshape(shape)


def effective_epsilon(z_t, z_0, t, sched: NoiseSchedule):
    """Residual that makes the Gaussian-form decomposition hold for blur.

    eps_hat = (z_t - sqrt(alpha_bar_t) * z_0) / sqrt(1 - alpha_bar_t).
    Works on numpy arrays and torch tensors alike.
    """
    sqrt_ab, sqrt_om = _coefficients(t, z_t, sched)
    return (z_t - sqrt_ab * z_0) / sqrt_om


def recover_z0(z_t, eps_hat, t, sched: NoiseSchedule):
    """One-step clean-latent estimate: (z_t - sqrt(1 - ab_t) * eps) / sqrt(ab_t)."""
    sqrt_ab, sqrt_om = _coefficients(t, z_t, sched)
    return (z_t - sqrt_om * eps_hat) / sqrt_ab


def posterior_mean(z_t, z_0, t: int, sched: NoiseSchedule):
    """Mean of q(z_{t-1} | z_t, z_0); reference algebra used only by tests."""
    _check_t(t, sched)
    ab_t = float(sched.alpha_bar[t])
    ab_prev = float(sched.alpha_bar[t - 1])
    alpha_t = float(sched.alpha[t])
    beta_t = float(sched.beta[t])
    coef_zt = math.sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t)
    coef_z0 = math.sqrt(ab_prev) * beta_t / (1.0 - ab_t)
    return coef_zt * z_t + coef_z0 * z_0
