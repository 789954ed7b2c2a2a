"""Kernel-conditioned control branch.

Four cooperating parts: a kernel estimator M that predicts a per-pixel blur
kernel field from the blurry image, a filter-like conditioning module F that
mixes the kernel condition into the latent via a predicted depthwise dynamic
filter, an encoder-copy control branch C whose zero-initialized projections
inject residuals into the denoiser's decoder skips, and a regressor T that
reads the inference timestep off the kernel field. With fresh F and C the
whole conditioned pipeline is bit-identical to the unconditioned one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import blur
from .codec import image_to_tensor
from .denoiser import DenoiserConfig, DenoiserUNet, TimeEmbedMLP, UNetEncoder, zero_init

T_PREDICT_MAX = 280.0  # trained timestep range, g(15)


@dataclass(frozen=True)
class ControlConfig:
    kernel_size: int = 9  # m
    filter_window: int = 3  # f, dynamic-filter footprint
    cond_channels: int = 32  # k_in channels at latent resolution
    d: int = 4  # latent downsample factor the condition is mapped to
    est_widths: tuple[int, ...] = (16, 32, 64)

    def as_dict(self) -> dict:
        return {
            "kernel_size": self.kernel_size,
            "filter_window": self.filter_window,
            "cond_channels": self.cond_channels,
            "d": self.d,
            "est_widths": list(self.est_widths),
        }


class KernelEstimator(nn.Module):
    """Image-space UNet with an m^2-channel softmax head (factor-4 downsampling)."""

    def __init__(self, cfg: ControlConfig, image_channels: int = 3):
        super().__init__()
        w0, w1, w2 = cfg.est_widths
        self.m = cfg.kernel_size

        def block(cin, cout):
            return nn.Sequential(nn.Conv2d(cin, cout, 3, padding=1), nn.SiLU())

        self.enc0 = block(image_channels, w0)
        self.down0 = nn.Conv2d(w0, w1, 3, stride=2, padding=1)
        self.enc1 = block(w1, w1)
        self.down1 = nn.Conv2d(w1, w2, 3, stride=2, padding=1)
        self.mid = block(w2, w2)
        self.up1 = nn.Conv2d(w2, w1, 3, padding=1)
        self.dec1 = block(w1 * 2, w1)
        self.up0 = nn.Conv2d(w1, w0, 3, padding=1)
        self.dec0 = block(w0 * 2, w0)
        self.head = nn.Conv2d(w0, self.m * self.m, 3, padding=1)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        H, W = img.shape[-2:]
        if H % 4 or W % 4:
            raise ValueError(f"image dims {H}x{W} must divide the estimator factor 4")
        h0 = self.enc0(img)
        h1 = self.enc1(F.silu(self.down0(h0)))
        h2 = self.mid(F.silu(self.down1(h1)))
        u1 = self.up1(F.interpolate(h2, scale_factor=2, mode="nearest"))
        h1 = self.dec1(torch.cat([u1, h1], dim=1))
        u0 = self.up0(F.interpolate(h1, scale_factor=2, mode="nearest"))
        h0 = self.dec0(torch.cat([u0, h0], dim=1))
        return torch.softmax(self.head(h0), dim=1)  # (B, m*m, H, W), unit sums


def field_tensor_to_numpy(field: torch.Tensor) -> np.ndarray:
    """(1, m*m, H, W) softmax output -> (m, m, H, W) kernel field array."""
    _, mm, H, W = field.shape
    m = int(round(math.sqrt(mm)))
    return field.detach().squeeze(0).reshape(m, m, H, W).numpy().astype(np.float64)


def numpy_field_to_tensor(fld: np.ndarray) -> torch.Tensor:
    m, _, H, W = fld.shape
    return torch.from_numpy(np.ascontiguousarray(fld.reshape(m * m, H, W))).float().unsqueeze(0)


def estimate_kernel(estimator: KernelEstimator, blur_img: np.ndarray) -> np.ndarray:
    """Run M on one image and return a validated (m, m, H, W) kernel field."""
    with torch.no_grad():
        field = estimator(image_to_tensor(blur_img))
    out = field_tensor_to_numpy(field)
    return blur.validate_kernel_field(out)


def reblur_torch(field: torch.Tensor, img: torch.Tensor) -> torch.Tensor:
    """Differentiable per-pixel convolution, reflect-padded.

    field: (B, m*m, H, W) with kernels flattened row-major; img: (B, C, H, W).
    Matches blur.convolve_pixelwise on the same inputs.
    """
    B, mm, H, W = field.shape
    m = int(round(math.sqrt(mm)))
    c = m // 2
    if img.shape[-2:] != (H, W):
        raise ValueError(f"field {H}x{W} does not match image {tuple(img.shape[-2:])}")
    C = img.shape[1]
    padded = F.pad(img, (c, c, c, c), mode="reflect")
    patches = F.unfold(padded, m).reshape(B, C, mm, H, W)
    return (patches * field[:, None]).sum(dim=2)


def reblur(fld: np.ndarray, sharp: np.ndarray) -> np.ndarray:
    """Numpy reblur convenience; the training path uses reblur_torch."""
    return blur.convolve_pixelwise(sharp, fld)


def apply_dynamic_filter(weights: torch.Tensor, feat: torch.Tensor) -> torch.Tensor:
    """Per-site depthwise filtering: same f x f taps across channels, zero-padded.

    weights: (B, f*f, H, W), feat: (B, C, H, W).
    """
    B, ff, H, W = weights.shape
    f = int(round(math.sqrt(ff)))
    if feat.shape[-2:] != (H, W):
        raise ValueError(f"weights {H}x{W} do not match features {tuple(feat.shape[-2:])}")
    C = feat.shape[1]
    patches = F.unfold(feat, f, padding=f // 2).reshape(B, C, ff, H, W)
    return (patches * weights[:, None]).sum(dim=2)


class KernelCondition(nn.Module):
    """Maps the kernel field to a latent-resolution condition map k_in."""

    def __init__(self, cfg: ControlConfig):
        super().__init__()
        n_stages = {4: 2, 8: 3}[cfg.d]
        ch = cfg.cond_channels
        layers = [nn.Conv2d(cfg.kernel_size**2, ch, 3, padding=1), nn.SiLU()]
        for _ in range(n_stages):
            layers += [nn.Conv2d(ch, ch, 3, stride=2, padding=1), nn.SiLU()]
        layers.append(nn.Conv2d(ch, ch, 3, padding=1))
        self.net = nn.Sequential(*layers)
        self.d = cfg.d

    def forward(self, field: torch.Tensor) -> torch.Tensor:
        H, W = field.shape[-2:]
        if H % self.d or W % self.d:
            raise ValueError(f"field dims {H}x{W} not divisible by d={self.d}")
        return self.net(field)


class FilterModule(nn.Module):
    """z_in1 = Conv(z); z_in2 = Conv(z_in1); taps from Cat(k_in, z_in2);
    output z_in1 + Z(dynamic_filter(taps, z_in2)) with Z zero-initialized."""

    def __init__(self, z_channels: int, cfg: ControlConfig):
        super().__init__()
        f = cfg.filter_window
        self.conv_in1 = nn.Conv2d(z_channels, z_channels, 3, padding=1)
        self.conv_in2 = nn.Conv2d(z_channels, z_channels, 3, padding=1)
        self.w_pred = nn.Conv2d(cfg.cond_channels + z_channels, f * f, 3, padding=1)
        self.zero_proj = zero_init(nn.Conv2d(z_channels, z_channels, 1))

    def forward(self, z_t: torch.Tensor, k_in: torch.Tensor) -> torch.Tensor:
        z1 = self.conv_in1(z_t)
        z2 = self.conv_in2(z1)
        if k_in.shape[-2:] != z2.shape[-2:]:
            raise ValueError(
                f"condition {tuple(k_in.shape[-2:])} does not match latent "
                f"{tuple(z2.shape[-2:])}"
            )
        taps = torch.softmax(self.w_pred(torch.cat([k_in, z2], dim=1)), dim=1)
        filtered = apply_dynamic_filter(taps, z2)
        return z1 + self.zero_proj(filtered)


class ControlBranch(nn.Module):
    """Copy of the denoiser encoder plus per-level zero-init output projections."""

    def __init__(self, dcfg: DenoiserConfig):
        super().__init__()
        self.time_mlp = TimeEmbedMLP(dcfg.emb_dim)
        self.encoder = UNetEncoder(dcfg)
        self.projections = nn.ModuleList(
            [zero_init(nn.Conv2d(w, w, 1)) for w in dcfg.widths]
        )

    def init_from_denoiser(self, model: DenoiserUNet) -> None:
        self.time_mlp.load_state_dict(model.time_mlp.state_dict())
        self.encoder.load_state_dict(model.encoder.state_dict())
        for proj in self.projections:
            zero_init(proj)

    def forward(self, z_out: torch.Tensor, t: torch.Tensor, c_embed: torch.Tensor):
        if t.ndim == 0:
            t = t.expand(z_out.shape[0])
        emb = self.time_mlp(t.to(z_out.dtype)) + c_embed
        _, skips = self.encoder(z_out, emb)
        return [proj(s) for proj, s in zip(self.projections, skips)]


class TimeRegressor(nn.Module):
    """Pooled multi-scale kernel-field statistics -> bounded timestep estimate."""

    def __init__(self, cfg: ControlConfig, widths: tuple[int, int, int] = (32, 64, 64)):
        super().__init__()
        mm = cfg.kernel_size**2
        w0, w1, w2 = widths
        self.conv0 = nn.Conv2d(mm, w0, 3, padding=1)
        self.conv1 = nn.Conv2d(w0, w1, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(w1, w2, 3, stride=2, padding=1)
        feat = 2 * (w0 + w1 + w2)  # global avg + max at each scale
        self.mlp = nn.Sequential(nn.Linear(feat, 128), nn.SiLU(), nn.Linear(128, 1))

    def forward(self, field: torch.Tensor) -> torch.Tensor:
        stats = []
        h = F.silu(self.conv0(field))
        stats += [h.mean(dim=(2, 3)), h.amax(dim=(2, 3))]
        h = F.silu(self.conv1(h))
        stats += [h.mean(dim=(2, 3)), h.amax(dim=(2, 3))]
        h = F.silu(self.conv2(h))
        stats += [h.mean(dim=(2, 3)), h.amax(dim=(2, 3))]
        raw = self.mlp(torch.cat(stats, dim=1)).squeeze(1)
        return T_PREDICT_MAX * torch.sigmoid(raw)  # bounded to [0, 280]


def predict_timestep(regressor: TimeRegressor, fld: np.ndarray) -> float:
    with torch.no_grad():
        t_hat = regressor(numpy_field_to_tensor(fld))
    return float(t_hat[0])


class KernelControlNet(nn.Module):
    """Bundle of {M, condition map, F, C, T} trained together in stage 3."""

    def __init__(self, ccfg: ControlConfig, dcfg: DenoiserConfig, image_channels: int = 3):
        super().__init__()
        self.ccfg = ccfg
        self.dcfg = dcfg
        self.estimator = KernelEstimator(ccfg, image_channels)
        self.condition = KernelCondition(ccfg)
        self.filter = FilterModule(dcfg.in_channels, ccfg)
        self.branch = ControlBranch(dcfg)
        self.regressor = TimeRegressor(ccfg)

    def init_from_denoiser(self, model: DenoiserUNet) -> None:
        self.branch.init_from_denoiser(model)

    def residuals(
        self,
        z_t: torch.Tensor,
        field: torch.Tensor,
        t: torch.Tensor,
        c_embed: torch.Tensor,
    ) -> list[torch.Tensor]:
        """filter_module -> control branch; the conditioning half of stage 3."""
        k_in = self.condition(field)
        z_out = self.filter(z_t, k_in)
        return self.branch(z_out, t, c_embed)


def make_control(
    ccfg: ControlConfig,
    dcfg: DenoiserConfig,
    foundation: DenoiserUNet | None = None,
    seed: int = 0,
    image_channels: int = 3,
) -> KernelControlNet:
    torch.manual_seed(seed)
    net = KernelControlNet(ccfg, dcfg, image_channels)
    if foundation is not None:
        net.init_from_denoiser(foundation)
    return net
