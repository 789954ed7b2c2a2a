"""Physical motion-blur forward process.

Blur is modeled two ways, both driven by a sub-pixel motion trajectory:
per-pixel kernel convolution (a kernel field of shape (m, m, H, W)) and
frame averaging of warped sub-frames. For translation-only motion the two
agree, which the tests exploit as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DOWNSAMPLE_MAX = 8  # largest codec factor; images must divide 2 * this


@dataclass(frozen=True)
class MotionTrajectory:
    """Ordered sub-pixel offsets (dx, dy), one per simulated sub-frame."""

    points: tuple[tuple[float, float], ...]
    max_step: float = 1.0

    def __post_init__(self):
        if len(self.points) < 1:
            raise ValueError("trajectory needs at least one point")
        if self.points[0] != (0.0, 0.0):
            raise ValueError("trajectory must start at (0, 0)")
        for a, b in zip(self.points, self.points[1:]):
            step = math.hypot(b[0] - a[0], b[1] - a[1])
            if step > self.max_step + 1e-9:
                raise ValueError(
                    f"consecutive offsets {a} -> {b} exceed max_step={self.max_step}"
                )

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class AdditiveNoiseSpec:
    """I.i.d. Gaussian pixel noise added after frame averaging."""

    sigma: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.sigma < 0.1:
            raise ValueError(f"sigma must be in [0, 0.1), got {self.sigma}")


@dataclass(frozen=True)
class TrajectoryParams:
    """Knobs for the damped random-walk trajectory generator.

    max_excursion bounds every position's distance from the start, so any
    centered window of the walk stays inside a (2 * max_excursion + 1) kernel.
    """

    n_points: int = 15
    max_step: float = 0.6
    damping: float = 0.85
    jitter: float = 0.35
    kick_prob: float = 0.08
    kick_strength: float = 0.5
    max_excursion: float = 1.9


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check the image contract: float (H, W, C) in [0, 1], dims divisible by 16."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W, C) with C in {{1, 3}}, got {img.shape}")
    h, w = img.shape[:2]
    if h < 16 or w < 16:
        raise ValueError(f"image dims must be >= 16, got {h}x{w}")
    if h % (2 * DOWNSAMPLE_MAX) or w % (2 * DOWNSAMPLE_MAX):
        raise ValueError(f"image dims must divide {2 * DOWNSAMPLE_MAX}, got {h}x{w}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.min() < -1e-9 or img.max() > 1.0 + 1e-9:
        raise ValueError("image values outside [0, 1]")
    return img


def validate_kernel_field(fld: np.ndarray, tol: float = 1e-5) -> np.ndarray:
    """Check kernel-field contract: (m, m, H, W), m odd, nonnegative, unit sums."""
    fld = np.asarray(fld)
    if fld.ndim != 4 or fld.shape[0] != fld.shape[1]:
        raise ValueError(f"expected (m, m, H, W), got {fld.shape}")
    m = fld.shape[0]
    if m % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {m}")
    if fld.min() < -tol:
        raise ValueError("kernel field has negative weights")
    sums = fld.sum(axis=(0, 1))
    if np.abs(sums - 1.0).max() > tol:
        raise ValueError("per-pixel kernels do not sum to 1")
    return fld


def identity_kernel_field(H: int, W: int, m: int) -> np.ndarray:
    """Field of centered delta kernels: convolution with it is the identity map."""
    if m % 2 == 0 or m < 1:
        raise ValueError(f"kernel size must be odd and positive, got {m}")
    if m > min(H, W):
        raise ValueError(f"kernel size {m} exceeds image dims {H}x{W}")
    fld = np.zeros((m, m, H, W), dtype=np.float64)
    fld[m // 2, m // 2] = 1.0
    return fld


def _splat_bilinear(canvas: np.ndarray, x: float, y: float) -> None:
    """Deposit unit energy at sub-pixel (x, y) into up to four cells of canvas."""
    m = canvas.shape[0]
    x0, y0 = math.floor(x), math.floor(y)
    fx, fy = x - x0, y - y0
    for (cy, cx, w) in (
        (y0, x0, (1 - fx) * (1 - fy)),
        (y0, x0 + 1, fx * (1 - fy)),
        (y0 + 1, x0, (1 - fx) * fy),
        (y0 + 1, x0 + 1, fx * fy),
    ):
        if w == 0.0:
            continue
        if not (0 <= cy < m and 0 <= cx < m):
            raise ValueError(
                f"trajectory point (dx={x - m // 2:.3f}, dy={y - m // 2:.3f}) "
                f"falls outside the {m}x{m} kernel window"
            )
        canvas[cy, cx] += w


def rasterize_offsets(points, m: int) -> np.ndarray:
    """Splat a list of (dx, dy) offsets around the kernel center and normalize."""
    if m % 2 == 0 or m < 1:
        raise ValueError(f"kernel size must be odd and positive, got {m}")
    c = m // 2
    k = np.zeros((m, m), dtype=np.float64)
    for dx, dy in points:
        _splat_bilinear(k, c + dx, c + dy)
    return k / k.sum()


def rasterize_trajectory(traj: MotionTrajectory, m: int) -> np.ndarray:
    """Rasterize a trajectory into a single m x m kernel.

    The kernel origin is the center cell; offsets are taken as-is (no
    re-centering), so a prefix of a trajectory rasterizes to a kernel whose
    support is contained in the full trajectory's kernel.
    """
    return rasterize_offsets(traj.points, m)


def convolve_pixelwise(
    img: np.ndarray, fld: np.ndarray, boundary: str = "reflect"
) -> np.ndarray:
    """Apply a per-pixel kernel field under reflect padding.

    out[y, x] = sum_{i,j} fld[i, j, y, x] * img_padded[y + i - m//2, x + j - m//2]
    """
    if boundary != "reflect":
        raise ValueError(f"unsupported boundary mode {boundary!r}")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"expected (H, W, C) image, got shape {img.shape}")
    m = fld.shape[0]
    H, W = img.shape[:2]
    if fld.shape != (m, m, H, W):
        raise ValueError(f"field shape {fld.shape} does not match image {H}x{W}")
    c = m // 2
    padded = np.pad(img, ((c, c), (c, c), (0, 0)), mode="reflect")
    out = np.zeros_like(img)
    for i in range(m):
        for j in range(m):
            out += fld[i, j, :, :, None] * padded[i : i + H, j : j + W]
    return out


def warp_bilinear(img: np.ndarray, offset: tuple[float, float]) -> np.ndarray:
    """Sample img at (x + dx, y + dy) with bilinear weights and reflect boundary.

    Warping by an offset equals convolution with a delta kernel splatted at
    that offset, which is what ties frame averaging to the kernel picture.
    """
    img = np.asarray(img, dtype=np.float64)
    dx, dy = offset
    if dx == 0.0 and dy == 0.0:
        return img.copy()
    H, W = img.shape[:2]
    ix, iy = math.floor(dx), math.floor(dy)
    fx, fy = dx - ix, dy - iy
    pad = max(abs(ix), abs(iy)) + 1
    padded = np.pad(img, ((pad, pad), (pad, pad), (0, 0)), mode="reflect")

    def shifted(sy: int, sx: int) -> np.ndarray:
        y0, x0 = pad + sy, pad + sx
        return padded[y0 : y0 + H, x0 : x0 + W]

    return (
        (1 - fx) * (1 - fy) * shifted(iy, ix)
        + fx * (1 - fy) * shifted(iy, ix + 1)
        + (1 - fx) * fy * shifted(iy + 1, ix)
        + fx * fy * shifted(iy + 1, ix + 1)
    )


def centered_window(traj: MotionTrajectory, n_frames: int) -> list[tuple[float, float]]:
    """First n_frames offsets, re-centered so the middle offset is (0, 0)."""
    if n_frames % 2 == 0 or n_frames < 1:
        raise ValueError(f"n_frames must be odd and positive, got {n_frames}")
    if len(traj) < n_frames:
        raise ValueError(f"trajectory has {len(traj)} points, need {n_frames}")
    pts = traj.points[:n_frames]
    mx, my = pts[n_frames // 2]
    return [(px - mx, py - my) for px, py in pts]


def synthesize_frame_average(
    sharp: np.ndarray,
    traj: MotionTrajectory,
    n_frames: int,
    noise: AdditiveNoiseSpec,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Average n_frames warped sub-frames; the middle sub-frame is the sharp target.

    Returns (blur, subframes). Shorter centered averages of the same subframes
    list reproduce lower blur severities of the same physical trajectory.
    """
    offsets = centered_window(traj, n_frames)
    subframes = [warp_bilinear(sharp, off) for off in offsets]
    blur = np.mean(subframes, axis=0)
    if noise.sigma > 0:
        rng = np.random.default_rng(noise.seed)
        blur = blur + rng.normal(0.0, noise.sigma, size=blur.shape)
    return np.clip(blur, 0.0, 1.0), subframes


def random_trajectory(params: TrajectoryParams, rng: np.random.Generator) -> MotionTrajectory:
    """Damped random walk with occasional velocity kicks.

    Steps are capped at max_step and positions projected back onto the
    max_excursion disc (projection onto a convex set never lengthens a step).
    """
    pts = [(0.0, 0.0)]
    pos = np.zeros(2)
    vel = rng.normal(0.0, params.jitter, size=2)
    for _ in range(params.n_points - 1):
        vel = params.damping * vel + rng.normal(0.0, params.jitter, size=2)
        if rng.random() < params.kick_prob:
            vel += rng.normal(0.0, params.kick_strength, size=2)
        speed = math.hypot(*vel)
        if speed > params.max_step:
            vel = vel * (params.max_step / speed)
        new = pos + vel
        radius = math.hypot(*new)
        if radius > params.max_excursion:
            new = new * (params.max_excursion / radius)
        vel = new - pos
        pos = new
        pts.append((float(pos[0]), float(pos[1])))
    return MotionTrajectory(points=tuple(pts), max_step=params.max_step)


def interpolate_kernel_grid(control: np.ndarray, H: int, W: int) -> np.ndarray:
    """Bilinearly interpolate a (gy, gx, m, m) control grid to an (m, m, H, W) field.

    Control kernels sit at the image corners of a regular grid; a pixel exactly
    under a control point gets that kernel unchanged. Mixing normalized kernels
    with convex weights keeps per-pixel sums at 1.
    """
    gy, gx, m, _ = control.shape
    ys = np.linspace(0.0, gy - 1.0, H) if gy > 1 else np.zeros(H)
    xs = np.linspace(0.0, gx - 1.0, W) if gx > 1 else np.zeros(W)
    y0 = np.minimum(ys.astype(int), max(gy - 2, 0))
    x0 = np.minimum(xs.astype(int), max(gx - 2, 0))
    fy = (ys - y0)[None, None, :, None]
    fx = (xs - x0)[None, None, None, :]
    y1 = np.minimum(y0 + 1, gy - 1)
    x1 = np.minimum(x0 + 1, gx - 1)

    def corner(yi: np.ndarray, xi: np.ndarray) -> np.ndarray:
        # gathered (H, W, m, m) control kernels, laid out as a field
        return control[yi[:, None], xi[None, :]].transpose(2, 3, 0, 1)

    return (
        (1 - fy) * (1 - fx) * corner(y0, x0)
        + (1 - fy) * fx * corner(y0, x1)
        + fy * (1 - fx) * corner(y1, x0)
        + fy * fx * corner(y1, x1)
    )


def sample_kernel_field(
    H: int,
    W: int,
    traj_params: TrajectoryParams,
    smoothness: float,
    rng_seed: int,
    m: int = 9,
) -> np.ndarray:
    """Spatially smooth per-pixel kernel field from a coarse grid of trajectories.

    smoothness is the control-point spacing in pixels; at smoothness >= max(H, W)
    the grid degenerates to a single control point and the field is uniform.
    """
    if smoothness < 0:
        raise ValueError(f"smoothness must be >= 0, got {smoothness}")
    rng = np.random.default_rng(rng_seed)
    spacing = max(smoothness, 1.0)
    gy = max(1, math.ceil(H / spacing))
    gx = max(1, math.ceil(W / spacing))
    control = np.empty((gy, gx, m, m), dtype=np.float64)
    for iy in range(gy):
        for ix in range(gx):
            traj = random_trajectory(traj_params, rng)
            control[iy, ix] = rasterize_trajectory(traj, m)
    return interpolate_kernel_grid(control, H, W)
