"""Image <-> latent codecs at a configurable downsampling factor d.

The default "exact" codec is a lossless space-to-depth rearrangement, so no
detail is lost between the pixel loss and the latent-space model. A small
convolutional autoencoder ("learned") mirrors the usual learned-codec
architecture and has to be pretrained before use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class CodecConfig:
    mode: str = "exact"  # exact | learned
    d: int = 4
    image_channels: int = 3
    learned_latent_channels: int = 4
    learned_width: int = 64

    def __post_init__(self):
        if self.mode not in ("exact", "learned"):
            raise ValueError(f"unknown codec mode {self.mode!r}")
        if self.d not in (4, 8):
            raise ValueError(f"downsampling factor must be 4 or 8, got {self.d}")

    @property
    def latent_channels(self) -> int:
        if self.mode == "exact":
            return self.image_channels * self.d * self.d
        return self.learned_latent_channels


def image_to_tensor(img: np.ndarray) -> torch.Tensor:
    """(H, W, C) float array in [0, 1] -> (1, C, H, W) float32 tensor."""
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).float().unsqueeze(0)


def tensor_to_image(x: torch.Tensor) -> np.ndarray:
    """(1, C, H, W) tensor -> (H, W, C) float64 array (no clamping)."""
    return x.detach().squeeze(0).permute(1, 2, 0).numpy().astype(np.float64)


def space_to_depth(x: torch.Tensor, d: int) -> torch.Tensor:
    B, C, H, W = x.shape
    if H % d or W % d:
        raise ValueError(f"spatial dims {H}x{W} not divisible by d={d}")
    x = x.reshape(B, C, H // d, d, W // d, d)
    return x.permute(0, 1, 3, 5, 2, 4).reshape(B, C * d * d, H // d, W // d)


def depth_to_space(x: torch.Tensor, d: int) -> torch.Tensor:
    B, Cd, h, w = x.shape
    if Cd % (d * d):
        raise ValueError(f"channel count {Cd} not divisible by d^2={d * d}")
    C = Cd // (d * d)
    x = x.reshape(B, C, d, d, h, w)
    return x.permute(0, 1, 4, 2, 5, 3).reshape(B, C, h * d, w * d)


class LearnedCodec(nn.Module):
    """Plain convolutional autoencoder; stride-2 stages down to H/d x W/d."""

    def __init__(self, cfg: CodecConfig):
        super().__init__()
        n_stages = {4: 2, 8: 3}[cfg.d]
        w = cfg.learned_width
        enc = [nn.Conv2d(cfg.image_channels, w, 3, padding=1), nn.SiLU()]
        for _ in range(n_stages):
            enc += [nn.Conv2d(w, w, 3, stride=2, padding=1), nn.SiLU(),
                    nn.Conv2d(w, w, 3, padding=1), nn.SiLU()]
        enc.append(nn.Conv2d(w, cfg.learned_latent_channels, 3, padding=1))
        self.encoder = nn.Sequential(*enc)
        dec = [nn.Conv2d(cfg.learned_latent_channels, w, 3, padding=1), nn.SiLU()]
        for _ in range(n_stages):
            dec += [nn.Upsample(scale_factor=2, mode="nearest"),
                    nn.Conv2d(w, w, 3, padding=1), nn.SiLU(),
                    nn.Conv2d(w, w, 3, padding=1), nn.SiLU()]
        dec.append(nn.Conv2d(w, cfg.image_channels, 3, padding=1))
        self.decoder = nn.Sequential(*dec)


class CodecState:
    """Frozen codec handle: config plus learned parameters when applicable."""

    def __init__(self, cfg: CodecConfig, model: LearnedCodec | None = None):
        self.cfg = cfg
        if cfg.mode == "learned":
            if model is None:
                raise ValueError("learned codec requires a LearnedCodec model")
            self.model = model
        else:
            self.model = None

    @property
    def d(self) -> int:
        return self.cfg.d

    @property
    def latent_channels(self) -> int:
        return self.cfg.latent_channels


def make_codec(cfg: CodecConfig, seed: int = 0) -> CodecState:
    if cfg.mode == "exact":
        return CodecState(cfg)
    torch.manual_seed(seed)
    return CodecState(cfg, LearnedCodec(cfg))


def encode(x: torch.Tensor, codec: CodecState) -> torch.Tensor:
    """(B, C, H, W) image tensor -> (B, C_lat, H/d, W/d) latent."""
    B, C, H, W = x.shape
    if H % codec.d or W % codec.d:
        raise ValueError(f"image dims {H}x{W} not divisible by d={codec.d}")
    if codec.cfg.mode == "exact":
        return space_to_depth(x, codec.d)
    return codec.model.encoder(x)


def decode(z: torch.Tensor, codec: CodecState) -> torch.Tensor:
    """Inverse of encode; exact mode is the exact inverse."""
    if codec.cfg.mode == "exact":
        return depth_to_space(z, codec.d)
    return codec.model.decoder(z)


def encode_image(img: np.ndarray, codec: CodecState) -> torch.Tensor:
    return encode(image_to_tensor(img), codec)


def decode_to_image(z: torch.Tensor, codec: CodecState, clamp: bool = True) -> np.ndarray:
    img = tensor_to_image(decode(z, codec))
    return np.clip(img, 0.0, 1.0) if clamp else img


def resize_trick_wrap(img: np.ndarray, inner) -> np.ndarray:
    """Run inner on a 2x bilinear upsample and resize the result back.

    Wrapping a factor-d pipeline this way halves its effective downsampling
    relative to the original image.
    """
    x = image_to_tensor(img)
    up = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
    out = inner(tensor_to_image(up))
    y = image_to_tensor(out)
    down = F.interpolate(y, scale_factor=0.5, mode="bilinear", align_corners=False)
    return tensor_to_image(down)


def pretrain_codec(
    codec: CodecState,
    images: list[np.ndarray],
    steps: int = 1500,
    batch_size: int = 8,
    lr: float = 2e-3,
    seed: int = 0,
) -> list[float]:
    """Fit the learned autoencoder by MSE reconstruction; returns the loss trace."""
    if codec.cfg.mode != "learned":
        raise ValueError("only the learned codec is trainable")
    model = codec.model
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    data = torch.cat([image_to_tensor(im) for im in images])
    rng = np.random.default_rng(seed)
    losses = []
    model.train()
    for _ in range(steps):
        idx = torch.from_numpy(rng.integers(len(data), size=batch_size))
        batch = data[idx]
        recon = model.decoder(model.encoder(batch))
        loss = F.mse_loss(recon, batch)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss))
    model.eval()
    return losses
