"""Trajectory-grouped datasets.

Every training sample is one scene with its ordered backward trajectory:
the sharp frame at t=0 plus progressively blurrier frames at t = g(n).
All points of a sample come from one physical motion trajectory (centered
sub-averages of one synthesized sub-frame sequence), which is exactly the
grouping consistency training relies on.
"""

from __future__ import annotations

import os
import warnings
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import blur, scenes
from .util import config_hash, load_image_png, save_image_png

MANIFEST_FORMAT = "trajectory-manifest"
MANIFEST_VERSION = 1
FRAME_COUNT_CHOICES = (5, 7, 9, 11, 13, 15)
T_PER_FRAME = 20
KERNEL_SIZE = 9  # covers the bounded trajectory excursion at toy scale


def g(n_frames: int) -> int:
    """Map an averaging frame count to a diffusion timestep: (n - 1) * 20."""
    if n_frames < 1 or n_frames % 2 == 0:
        raise ValueError(f"n_frames must be odd and >= 1, got {n_frames}")
    return (n_frames - 1) * T_PER_FRAME


@dataclass(frozen=True)
class TrajectoryPoint:
    image_path: str  # relative to the manifest root
    n_frames: int
    t: int

    def __post_init__(self):
        if self.t != g(self.n_frames):
            raise ValueError(
                f"t={self.t} inconsistent with n_frames={self.n_frames} (g gives {g(self.n_frames)})"
            )


@dataclass(frozen=True)
class TrajectorySample:
    sample_id: str
    points: tuple[TrajectoryPoint, ...]
    blur_method: str  # frame_average | kernel_field
    scene_seed: int

    def __post_init__(self):
        if not self.points or self.points[0].t != 0:
            raise ValueError(f"sample {self.sample_id}: first point must be t=0")
        ts = [p.t for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"sample {self.sample_id}: t must be strictly increasing")
        if self.blur_method not in ("frame_average", "kernel_field"):
            raise ValueError(f"unknown blur_method {self.blur_method!r}")
        if " " in self.sample_id or "|" in self.sample_id:
            raise ValueError(f"sample_id {self.sample_id!r} contains reserved characters")

    @property
    def sharp_path(self) -> str:
        return self.points[0].image_path


@dataclass
class DatasetManifest:
    version: int
    split: str  # train | test
    samples: tuple[TrajectorySample, ...]
    config_hash: str
    root: Path = field(default=Path("."), compare=False)

    @property
    def frame_count_histogram(self) -> dict[int, int]:
        counts = Counter(p.n_frames for s in self.samples for p in s.points if p.n_frames > 1)
        return dict(sorted(counts.items()))


@dataclass(frozen=True)
class BuildConfig:
    num_scenes: int
    H: int = 32
    W: int = 32
    n_frames_choices: tuple[int, ...] = FRAME_COUNT_CHOICES
    min_points_per_trajectory: int = 3
    seed: int = 0
    split: str = "train"
    blur_method: str = "frame_average"
    noise_sigma: float = 0.005
    max_step: float = 0.6

    def as_dict(self) -> dict:
        return {
            "num_scenes": self.num_scenes,
            "H": self.H,
            "W": self.W,
            "n_frames_choices": list(self.n_frames_choices),
            "min_points_per_trajectory": self.min_points_per_trajectory,
            "seed": self.seed,
            "split": self.split,
            "blur_method": self.blur_method,
            "noise_sigma": self.noise_sigma,
            "max_step": self.max_step,
        }


def _effective_frame_counts(cfg: BuildConfig) -> list[int]:
    ns = sorted(set(cfg.n_frames_choices))
    if not ns or any(n not in FRAME_COUNT_CHOICES for n in ns):
        raise ValueError(
            f"n_frames_choices must be a nonempty subset of {FRAME_COUNT_CHOICES}, got {ns}"
        )
    if cfg.split == "train" and 1 + len(ns) < cfg.min_points_per_trajectory:
        # expand with every smaller standard frame count so the >= min rule holds
        ns = [n for n in FRAME_COUNT_CHOICES if n <= max(ns)]
        if 1 + len(ns) < cfg.min_points_per_trajectory:
            raise ValueError(
                f"cannot reach {cfg.min_points_per_trajectory} trajectory points "
                f"with frame counts up to {max(ns)}"
            )
    return ns


def _scene_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _build_scene_points(
    cfg: BuildConfig, scene_seed: int, ns: list[int], sample_dir: Path, root: Path
) -> tuple[TrajectoryPoint, ...]:
    rng_scene = np.random.default_rng([scene_seed, 0])
    rng_traj = np.random.default_rng([scene_seed, 1])
    sharp = scenes.synth_scene(cfg.H, cfg.W, rng_scene)
    n_max = max(ns)
    params = blur.TrajectoryParams(n_points=n_max, max_step=cfg.max_step)
    traj = blur.random_trajectory(params, rng_traj)
    _, subframes = blur.synthesize_frame_average(
        sharp, traj, n_max, blur.AdditiveNoiseSpec(sigma=0.0)
    )
    mid = n_max // 2

    def rel(name: str) -> str:
        return str((sample_dir / name).relative_to(root))

    points = []
    sharp_name = "t0000_n01.png"
    save_image_png(subframes[mid], sample_dir / sharp_name)
    points.append(TrajectoryPoint(image_path=rel(sharp_name), n_frames=1, t=0))

    for n in ns:
        noise = blur.AdditiveNoiseSpec(sigma=cfg.noise_sigma, seed=scene_seed * 31 + n)
        if cfg.blur_method == "frame_average":
            window = subframes[mid - n // 2 : mid + n // 2 + 1]
            img = np.mean(window, axis=0)
        else:
            offsets = blur.centered_window(traj, n)
            kernel = blur.rasterize_offsets(offsets, KERNEL_SIZE)
            fld = np.broadcast_to(
                kernel[:, :, None, None], (KERNEL_SIZE, KERNEL_SIZE, cfg.H, cfg.W)
            )
            img = blur.convolve_pixelwise(sharp, fld)
        if noise.sigma > 0:
            img = img + np.random.default_rng(noise.seed).normal(0, noise.sigma, img.shape)
        img = np.clip(img, 0.0, 1.0)
        t = g(n)
        name = f"t{t:04d}_n{n:02d}.png"
        save_image_png(img, sample_dir / name)
        points.append(TrajectoryPoint(image_path=rel(name), n_frames=n, t=t))
    return tuple(points)


def build_toy_dataset(cfg: BuildConfig, out_dir: Path) -> DatasetManifest:
    """Synthesize scenes, write images + manifest under out_dir, return the manifest.

    Train samples carry every configured blur level of one trajectory; test
    samples carry a single (sharp, blur) pair with the blur level drawn from
    the configured choices.
    """
    if cfg.split not in ("train", "test"):
        raise ValueError(f"split must be train or test, got {cfg.split!r}")
    if cfg.H < 16 or cfg.W < 16 or cfg.H % 16 or cfg.W % 16:
        raise ValueError(f"scene dims must be >= 16 and divisible by 16, got {cfg.H}x{cfg.W}")
    ns_all = _effective_frame_counts(cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg.as_dict())

    samples = []
    for idx in range(cfg.num_scenes):
        sample_id = f"scene{idx:04d}"
        sseed = _scene_seed(cfg.seed, idx)
        if cfg.split == "test" and len(ns_all) > 1:
            pick = np.random.default_rng([sseed, 2]).integers(len(ns_all))
            ns = [ns_all[int(pick)]]
        else:
            ns = ns_all
        sample_dir = out_dir / "images" / sample_id
        sample_dir.mkdir(parents=True, exist_ok=True)
        points = _build_scene_points(cfg, sseed, ns, sample_dir, out_dir)
        samples.append(
            TrajectorySample(
                sample_id=sample_id,
                points=points,
                blur_method=cfg.blur_method,
                scene_seed=sseed,
            )
        )

    manifest = DatasetManifest(
        version=MANIFEST_VERSION,
        split=cfg.split,
        samples=tuple(samples),
        config_hash=chash,
        root=out_dir,
    )
    write_manifest(manifest, out_dir / "manifest.txt")
    return manifest


def write_manifest(manifest: DatasetManifest, path: Path) -> None:
    hist = ",".join(f"{n}:{c}" for n, c in manifest.frame_count_histogram.items())
    lines = [
        f"{MANIFEST_FORMAT} v{manifest.version} split={manifest.split} "
        f"config={manifest.config_hash} histogram={hist}"
    ]
    for s in manifest.samples:
        points = " ".join(
            f"point:t={p.t},n={p.n_frames},path={p.image_path}" for p in s.points
        )
        lines.append(f"{s.sample_id} | {s.blur_method} | {s.scene_seed} | {points}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: Path) -> DatasetManifest:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    if not lines:
        raise ValueError(f"{path}: empty manifest")
    head = lines[0].split()
    if len(head) < 4 or head[0] != MANIFEST_FORMAT or not head[1].startswith("v"):
        raise ValueError(f"{path}: bad manifest header {lines[0]!r}")
    version = int(head[1][1:])
    fields = dict(part.split("=", 1) for part in head[2:])
    samples = []
    for ln in lines[1:]:
        sid, method, sseed, points_str = (part.strip() for part in ln.split(" | "))
        points = []
        for tok in points_str.split(" "):
            if not tok.startswith("point:"):
                raise ValueError(f"{path}: bad point token {tok!r}")
            kv = dict(item.split("=", 1) for item in tok[len("point:") :].split(","))
            points.append(
                TrajectoryPoint(image_path=kv["path"], n_frames=int(kv["n"]), t=int(kv["t"]))
            )
        samples.append(
            TrajectorySample(
                sample_id=sid,
                points=tuple(points),
                blur_method=method,
                scene_seed=int(sseed),
            )
        )
    return DatasetManifest(
        version=version,
        split=fields["split"],
        samples=tuple(samples),
        config_hash=fields["config"],
        root=path.parent,
    )


def validate_manifest(manifest: DatasetManifest, check_files: bool = True) -> None:
    """Enforce the dataset contract; raises with the first violation found."""
    for s in manifest.samples:
        if manifest.split == "train" and len(s.points) < 3:
            raise ValueError(f"{s.sample_id}: training trajectory has {len(s.points)} points (< 3)")
        if check_files:
            for p in s.points:
                full = manifest.root / p.image_path
                if not full.exists():
                    raise FileNotFoundError(f"{s.sample_id}: missing image {full}")
                img = load_image_png(full)
                blur.validate_image(img)


def import_paired_directory(blur_dir: Path, sharp_dir: Path, assumed_n: int) -> DatasetManifest:
    """Adopt externally supplied (blur, sharp) pairs as 2-point test trajectories."""
    if assumed_n < 1 or assumed_n % 2 == 0:
        raise ValueError(f"assumed_n must be odd and >= 1, got {assumed_n}")
    blur_dir, sharp_dir = Path(blur_dir), Path(sharp_dir)
    blur_files = {p.name: p for p in sorted(blur_dir.glob("*.png"))}
    sharp_files = {p.name: p for p in sorted(sharp_dir.glob("*.png"))}
    orphans = sorted(set(blur_files) ^ set(sharp_files))
    if orphans:
        raise ValueError(f"unmatched filenames between {blur_dir} and {sharp_dir}: {orphans}")
    if not blur_files:
        warnings.warn(f"no image pairs found under {blur_dir} / {sharp_dir}")
    root = Path(os.path.commonpath([str(blur_dir.resolve()), str(sharp_dir.resolve())]))
    t = g(assumed_n)
    samples = []
    for name in sorted(blur_files):
        sid = name.rsplit(".", 1)[0]
        samples.append(
            TrajectorySample(
                sample_id=sid,
                points=(
                    TrajectoryPoint(
                        image_path=str(sharp_files[name].resolve().relative_to(root)),
                        n_frames=1,
                        t=0,
                    ),
                    TrajectoryPoint(
                        image_path=str(blur_files[name].resolve().relative_to(root)),
                        n_frames=assumed_n,
                        t=t,
                    ),
                ),
                blur_method="frame_average",
                scene_seed=0,
            )
        )
    return DatasetManifest(
        version=MANIFEST_VERSION,
        split="test",
        samples=tuple(samples),
        config_hash=config_hash({"import": str(blur_dir), "assumed_n": assumed_n}),
        root=root,
    )


class BatchItem(NamedTuple):
    degraded: np.ndarray  # trajectory point image, the denoiser input
    sharp: np.ndarray
    t: int
    n_frames: int
    sample_id: str


@lru_cache(maxsize=8192)
def _cached_image(path_str: str) -> np.ndarray:
    img = load_image_png(Path(path_str))
    img.setflags(write=False)
    return img


def eligible_pairs(manifest: DatasetManifest) -> list[tuple[TrajectorySample, TrajectoryPoint]]:
    """All (sample, point) pairs usable as training inputs: t > 0 only."""
    return [(s, p) for s in manifest.samples for p in s.points if p.t > 0]


def load_batch(
    manifest: DatasetManifest,
    batch_size: int,
    rng: np.random.Generator,
    sampling: str = "uniform_over_points",
) -> list[BatchItem]:
    """Draw training items uniformly over all t > 0 trajectory points."""
    if manifest.split != "train":
        raise ValueError(f"load_batch requires a train manifest, got split={manifest.split!r}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if sampling != "uniform_over_points":
        raise ValueError(f"unknown sampling mode {sampling!r}")
    pairs = eligible_pairs(manifest)
    if not pairs:
        raise ValueError("manifest has no t > 0 points")
    items = []
    for k in rng.integers(len(pairs), size=batch_size):
        s, p = pairs[int(k)]
        degraded = _cached_image(str(manifest.root / p.image_path))
        sharp = _cached_image(str(manifest.root / s.sharp_path))
        items.append(BatchItem(degraded, sharp, p.t, p.n_frames, s.sample_id))
    return items
