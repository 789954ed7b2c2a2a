"""Timestep-conditioned UNet predicting the effective epsilon.

Three resolution levels with two residual blocks each. The encoder is a
standalone submodule so the control branch and the GAN discriminator can be
instantiated as exact architectural copies and initialized from its weights.
The final convolution is zero-initialized: a fresh model outputs exactly 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class DenoiserConfig:
    in_channels: int
    widths: tuple[int, ...] = (32, 64, 128)
    blocks_per_level: int = 2
    emb_dim: int = 128
    T_max: int = 1000

    def as_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "widths": list(self.widths),
            "blocks_per_level": self.blocks_per_level,
            "emb_dim": self.emb_dim,
            "T_max": self.T_max,
        }


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Continuous sinusoidal features of a float timestep, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / (half - 1)
    )
    args = t[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


def zero_init(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        nn.init.zeros_(p)
    return module


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, emb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, out_ch)
        self.norm2 = nn.GroupNorm(8, out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.emb_proj(emb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class UNetEncoder(nn.Module):
    """conv_in plus the down path; returns the bottom feature and one skip per level."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        w = cfg.widths
        self.conv_in = nn.Conv2d(cfg.in_channels, w[0], 3, padding=1)
        self.levels = nn.ModuleList()
        self.downs = nn.ModuleList()
        prev = w[0]
        for i, width in enumerate(w):
            blocks = nn.ModuleList()
            for _ in range(cfg.blocks_per_level):
                blocks.append(ResBlock(prev, width, cfg.emb_dim))
                prev = width
            self.levels.append(blocks)
            if i < len(w) - 1:
                self.downs.append(nn.Conv2d(width, width, 3, stride=2, padding=1))

    def forward(self, z: torch.Tensor, emb: torch.Tensor):
        h = self.conv_in(z)
        skips = []
        for i, blocks in enumerate(self.levels):
            for blk in blocks:
                h = blk(h, emb)
            skips.append(h)
            if i < len(self.downs):
                h = self.downs[i](h)
        return h, skips


class TimeEmbedMLP(nn.Module):
    def __init__(self, emb_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(emb_dim, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim)
        )

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        return self.net(sinusoidal_embedding(t, self.net[0].in_features))


class DenoiserUNet(nn.Module):
    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.widths
        self.time_mlp = TimeEmbedMLP(cfg.emb_dim)
        self.prompt = nn.Parameter(torch.zeros(cfg.emb_dim))  # learnable condition c
        self.encoder = UNetEncoder(cfg)
        self.mid = nn.ModuleList(
            [ResBlock(w[-1], w[-1], cfg.emb_dim) for _ in range(cfg.blocks_per_level)]
        )
        self.ups = nn.ModuleList()
        self.dec_levels = nn.ModuleList()
        for i in reversed(range(len(w))):
            blocks = nn.ModuleList()
            prev = w[i] * 2  # bottom feature concatenated with the level skip
            for _ in range(cfg.blocks_per_level):
                blocks.append(ResBlock(prev, w[i], cfg.emb_dim))
                prev = w[i]
            self.dec_levels.append(blocks)
            if i > 0:
                self.ups.append(nn.Conv2d(w[i], w[i - 1], 3, padding=1))
        self.out_norm = nn.GroupNorm(8, w[0])
        self.out_conv = zero_init(nn.Conv2d(w[0], cfg.in_channels, 3, padding=1))
        self.forward_calls = 0

    def embed(self, t: torch.Tensor) -> torch.Tensor:
        return self.time_mlp(t) + self.prompt[None, :]

    def forward(
        self,
        z_t: torch.Tensor,
        t: torch.Tensor,
        control_residuals: list[torch.Tensor] | None = None,
    ) -> torch.Tensor:
        self.forward_calls += 1
        if z_t.shape[1] != self.cfg.in_channels:
            raise ValueError(
                f"expected {self.cfg.in_channels} input channels, got {z_t.shape[1]}"
            )
        if t.ndim == 0:
            t = t.expand(z_t.shape[0])
        bad = (t < 0) | (t > self.cfg.T_max)
        if bool(bad.any()):
            raise ValueError(f"t outside [0, {self.cfg.T_max}]")
        emb = self.embed(t.to(z_t.dtype))
        h, skips = self.encoder(z_t, emb)
        if control_residuals is not None:
            if len(control_residuals) != len(skips):
                raise ValueError(
                    f"expected {len(skips)} control residuals, got {len(control_residuals)}"
                )
            skips = [s + r for s, r in zip(skips, control_residuals)]
        for blk in self.mid:
            h = blk(h, emb)
        n_levels = len(self.cfg.widths)
        for k, blocks in enumerate(self.dec_levels):
            level = n_levels - 1 - k
            skip = skips[level]
            if h.shape[-2:] != skip.shape[-2:]:
                h = F.interpolate(h, size=skip.shape[-2:], mode="nearest")
            h = torch.cat([h, skip], dim=1)
            for blk in blocks:
                h = blk(h, emb)
            if level > 0:
                h = self.ups[k](F.interpolate(h, scale_factor=2, mode="nearest"))
        return self.out_conv(F.silu(self.out_norm(h)))


def make_denoiser(cfg: DenoiserConfig, seed: int = 0) -> DenoiserUNet:
    torch.manual_seed(seed)
    return DenoiserUNet(cfg)
