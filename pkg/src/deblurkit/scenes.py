"""Procedural toy scenes: gradients, textured convex polygons, bar glyphs.

Scenes are generated fresh from a seed, so datasets are hermetic and
rebuildable. Content is deliberately edge-rich to give deblurring something
to recover.
"""

from __future__ import annotations

import numpy as np


def _unit_grid(H: int, W: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:H, 0:W]
    return ys / max(H - 1, 1), xs / max(W - 1, 1)


def _gradient_background(H: int, W: int, rng: np.random.Generator) -> np.ndarray:
    y, x = _unit_grid(H, W)
    theta = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(theta) * x + np.sin(theta) * y + 1) / 2
    c0, c1 = rng.uniform(0.05, 0.95, 3), rng.uniform(0.05, 0.95, 3)
    img = ramp[:, :, None] * c1 + (1 - ramp[:, :, None]) * c0
    # low-frequency shading
    fx, fy = rng.uniform(0.5, 2.0, 2)
    phase = rng.uniform(0, 2 * np.pi)
    img += 0.08 * np.sin(2 * np.pi * (fx * x + fy * y) + phase)[:, :, None]
    return img


def _convex_polygon_mask(H: int, W: int, rng: np.random.Generator) -> np.ndarray:
    cy, cx = rng.uniform(0.2, 0.8) * H, rng.uniform(0.2, 0.8) * W
    n_verts = rng.integers(3, 7)
    angles = np.sort(rng.uniform(0, 2 * np.pi, n_verts))
    radius = rng.uniform(0.12, 0.35) * min(H, W)
    vx = cx + radius * np.cos(angles)
    vy = cy + radius * np.sin(angles)
    ys, xs = np.mgrid[0:H, 0:W]
    inside = np.ones((H, W), dtype=bool)
    for i in range(n_verts):
        x1, y1 = vx[i], vy[i]
        x2, y2 = vx[(i + 1) % n_verts], vy[(i + 1) % n_verts]
        cross = (x2 - x1) * (ys - y1) - (y2 - y1) * (xs - x1)
        inside &= cross >= 0
    return inside


def _bar_mask(H: int, W: int, rng: np.random.Generator) -> np.ndarray:
    cy, cx = rng.uniform(0.15, 0.85) * H, rng.uniform(0.15, 0.85) * W
    theta = rng.uniform(0, np.pi)
    length = rng.uniform(0.2, 0.6) * min(H, W)
    width = rng.uniform(1.0, 0.08 * min(H, W))
    ys, xs = np.mgrid[0:H, 0:W]
    dx, dy = xs - cx, ys - cy
    along = dx * np.cos(theta) + dy * np.sin(theta)
    perp = -dx * np.sin(theta) + dy * np.cos(theta)
    return (np.abs(along) <= length / 2) & (np.abs(perp) <= width / 2)


def synth_scene(H: int, W: int, rng: np.random.Generator) -> np.ndarray:
    """Render one random scene as a float (H, W, 3) image in [0, 1]."""
    img = _gradient_background(H, W, rng)
    y, x = _unit_grid(H, W)
    for _ in range(int(rng.integers(2, 5))):
        mask = _convex_polygon_mask(H, W, rng)
        color = rng.uniform(0.0, 1.0, 3)
        fx, fy = rng.uniform(2.0, 8.0, 2)
        texture = 0.5 + 0.5 * np.sin(2 * np.pi * (fx * x + fy * y) + rng.uniform(0, 2 * np.pi))
        amp = rng.uniform(0.0, 0.35)
        fill = color[None, None, :] * (1 - amp + amp * texture[:, :, None])
        img = np.where(mask[:, :, None], fill, img)
    for _ in range(int(rng.integers(2, 5))):
        mask = _bar_mask(H, W, rng)
        color = rng.uniform(0.0, 1.0, 3)
        img = np.where(mask[:, :, None], color[None, None, :], img)
    return np.clip(img, 0.0, 1.0)
