"""Grayscale image helpers: bilinear resampling and binary PGM I/O."""

from __future__ import annotations

import os
import re
from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    pass


def _axis_weights(n_in: int, n_out: int):
    # Pixel-center alignment: output pixel j samples input coordinate (j + 0.5) * n_in / n_out - 0.5.
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of a 2-D array; returns float64."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if height < 1 or width < 1:
        raise ValueError(f"target size must be positive, got {height}x{width}")
    h, w = img.shape
    if (h, w) == (height, width):
        return img.copy()
    lo, hi, fr = _axis_weights(h, height)
    rows = img[lo] * (1 - fr)[:, None] + img[hi] * fr[:, None]
    lo, hi, fr = _axis_weights(w, width)
    return rows[:, lo] * (1 - fr)[None, :] + rows[:, hi] * fr[None, :]


def resize_to_height(img: np.ndarray, height: int) -> np.ndarray:
    h, w = img.shape
    width = max(1, int(round(w * height / h)))
    return resize_bilinear(img, height, width)


def to_bytes(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def write_pgm(path: str | os.PathLike, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValueError("PGM output needs a 2-D uint8 array")
    h, w = img.shape
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    os.replace(tmp, path)


_HEADER = re.compile(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    m = _HEADER.match(data)
    if not m:
        raise ImageFormatError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(v) for v in m.groups())
    if maxval != 255:
        raise ImageFormatError(f"{path}: unsupported maxval {maxval}")
    body = data[m.end() :]
    if len(body) != w * h:
        raise ImageFormatError(f"{path}: expected {w * h} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Read a grayscale image; PGM natively, other formats through Pillow."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8).copy()
