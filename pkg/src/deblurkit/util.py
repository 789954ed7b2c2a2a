"""Small shared helpers: hashing and image file I/O."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def config_hash(obj) -> str:
    """Short stable hash of a JSON-serializable config (sorted keys)."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return sha256_hex(blob.encode("utf-8"))[:16]


def file_hash(path: Path) -> str:
    return sha256_hex(Path(path).read_bytes())[:16]


def save_image_png(img: np.ndarray, path: Path) -> None:
    """Quantize to 8-bit and write losslessly."""
    arr = np.clip(np.asarray(img), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    if data.shape[2] == 1:
        pil = Image.fromarray(data[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(data, mode="RGB")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pil.save(path, format="PNG")


def load_image_png(path: Path) -> np.ndarray:
    """Read a PNG back to float (H, W, C) in [0, 1]."""
    with Image.open(path) as pil:
        arr = np.asarray(pil, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr
