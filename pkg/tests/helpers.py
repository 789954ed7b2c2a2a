"""Independent brute-force oracles shared by the test modules.

Everything here is written as plain double loops over pixels so it stays
independent of the vectorized implementations it checks.
"""

from __future__ import annotations

import math

import numpy as np


def brute_force_convolve(img: np.ndarray, fld: np.ndarray) -> np.ndarray:
    """Per-pixel kernel convolution with reflect padding, one pixel at a time."""
    m = fld.shape[0]
    c = m // 2
    H, W, C = img.shape
    padded = np.pad(img, ((c, c), (c, c), (0, 0)), mode="reflect")
    out = np.zeros_like(img, dtype=np.float64)
    for y in range(H):
        for x in range(W):
            for i in range(m):
                for j in range(m):
                    out[y, x] += fld[i, j, y, x] * padded[y + i, x + j]
    return out


def brute_force_splat(points, m: int) -> np.ndarray:
    """Bilinear splat of offsets around the kernel center, then normalize."""
    k = np.zeros((m, m), dtype=np.float64)
    c = m // 2
    for dx, dy in points:
        x, y = c + dx, c + dy
        x0, y0 = math.floor(x), math.floor(y)
        fx, fy = x - x0, y - y0
        for cy, cx, w in (
            (y0, x0, (1 - fx) * (1 - fy)),
            (y0, x0 + 1, fx * (1 - fy)),
            (y0 + 1, x0, (1 - fx) * fy),
            (y0 + 1, x0 + 1, fx * fy),
        ):
            if w > 0:
                k[cy, cx] += w
    return k / k.sum()


def brute_force_dynamic_filter(weights: np.ndarray, feat: np.ndarray) -> np.ndarray:
    """Depthwise dynamic filtering via explicit loops.

    weights: (B, f*f, H, W) per-site filter taps, feat: (B, C, H, W).
    Zero padding at the border, matching the torch implementation.
    """
    B, ff, H, W = weights.shape
    f = int(round(math.sqrt(ff)))
    c = f // 2
    _, C, _, _ = feat.shape
    padded = np.zeros((B, C, H + 2 * c, W + 2 * c), dtype=np.float64)
    padded[:, :, c : c + H, c : c + W] = feat
    out = np.zeros_like(feat, dtype=np.float64)
    for b in range(B):
        for ch in range(C):
            for y in range(H):
                for x in range(W):
                    acc = 0.0
                    for i in range(f):
                        for j in range(f):
                            acc += weights[b, i * f + j, y, x] * padded[b, ch, y + i, x + j]
                    out[b, ch, y, x] = acc
    return out


def brute_force_psnr(a: np.ndarray, b: np.ndarray) -> float:
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0:
        return 99.0
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = size // 2
    g = np.array(
        [math.exp(-(i - half) ** 2 / (2 * sigma**2)) for i in range(size)],
        dtype=np.float64,
    )
    w = np.outer(g, g)
    return w / w.sum()


def brute_force_ssim(a: np.ndarray, b: np.ndarray, size: int = 11, sigma: float = 1.5) -> float:
    """SSIM with an 11x11 Gaussian window gathered per pixel under reflect padding."""
    k1, k2 = 0.01, 0.03
    c1, c2 = k1**2, k2**2
    win = gaussian_window(size, sigma)
    half = size // 2
    H, W, C = a.shape
    total = 0.0
    for ch in range(C):
        pa = np.pad(a[:, :, ch], half, mode="reflect").astype(np.float64)
        pb = np.pad(b[:, :, ch], half, mode="reflect").astype(np.float64)
        for y in range(H):
            for x in range(W):
                wa = pa[y : y + size, x : x + size]
                wb = pb[y : y + size, x : x + size]
                mu_a = float((win * wa).sum())
                mu_b = float((win * wb).sum())
                var_a = float((win * wa * wa).sum()) - mu_a**2
                var_b = float((win * wb * wb).sum()) - mu_b**2
                cov = float((win * wa * wb).sum()) - mu_a * mu_b
                total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
                    (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
                )
    return total / (H * W * C)


def random_image(rng: np.random.Generator, H: int = 32, W: int = 32, C: int = 3) -> np.ndarray:
    return rng.random((H, W, C))


def random_kernel_field(rng: np.random.Generator, m: int, H: int, W: int) -> np.ndarray:
    fld = rng.random((m, m, H, W))
    return fld / fld.sum(axis=(0, 1), keepdims=True)
