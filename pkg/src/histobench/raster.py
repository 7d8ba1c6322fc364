"""Core pixel-grid type, color conversion, resizing, and PNG I/O."""

from __future__ import annotations

import dataclasses

import numpy as np
from PIL import Image, UnidentifiedImageError


class RasterError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class Raster:
    """8-bit image, shape (height, width, channels) with channels 1 or 3.

    The uint8 array is the canonical representation; ``to_float`` exposes a
    [0, 1] view for numeric work and ``from_float`` quantizes back with
    round-half-up so that uint8 -> float -> uint8 is the identity.
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or a.shape[2] not in (1, 3):
            raise RasterError(f"expected (h, w, 1|3) array, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise RasterError("image must be at least 1x1")
        if a.dtype != np.uint8:
            raise RasterError(f"expected uint8 data, got {a.dtype}")
        object.__setattr__(self, "data", np.ascontiguousarray(a))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def to_float(self) -> np.ndarray:
        return self.data.astype(np.float64) / 255.0

    @staticmethod
    def from_float(arr: np.ndarray) -> "Raster":
        a = np.asarray(arr, dtype=np.float64)
        q = np.floor(np.clip(a, 0.0, 1.0) * 255.0 + 0.5)
        return Raster(q.astype(np.uint8))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Raster):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )


def load_image(path) -> Raster:
    """Load an 8-bit gray or RGB PNG. 16-bit PNGs are rejected (mask loading
    lives in metrics_fullref)."""
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise RasterError(f"malformed PNG {path}: {e}") from e
    if img.format != "PNG":
        raise RasterError(f"{path}: only PNG input is supported, got {img.format}")
    if img.mode in ("I", "I;16", "I;16B"):
        raise RasterError(f"{path}: 16-bit PNG not supported by load_image")
    if img.mode == "L":
        arr = np.asarray(img, dtype=np.uint8)[:, :, None]
    elif img.mode == "RGB":
        arr = np.asarray(img, dtype=np.uint8)
    elif img.mode in ("LA", "RGBA", "P"):
        conv = img.convert("RGB")
        arr = np.asarray(conv, dtype=np.uint8)
    else:
        raise RasterError(f"{path}: unsupported PNG mode {img.mode}")
    return Raster(arr)


def save_image(r: Raster, path) -> None:
    if r.channels == 1:
        img = Image.fromarray(r.data[:, :, 0], mode="L")
    else:
        img = Image.fromarray(r.data, mode="RGB")
    img.save(path, format="PNG")


_LUMA = np.array([0.299, 0.587, 0.114])


def to_grayscale(r: Raster) -> Raster:
    """BT.601 integer luma: gray = round(0.299 R + 0.587 G + 0.114 B)."""
    if r.channels != 3:
        raise RasterError("to_grayscale expects an RGB raster")
    g = np.floor(r.data.astype(np.float64) @ _LUMA + 0.5)
    return Raster(g.astype(np.uint8)[:, :, None])


def ensure_gray(r: Raster) -> Raster:
    return r if r.channels == 1 else to_grayscale(r)


def _catmull_rom(t: np.ndarray) -> np.ndarray:
    # Keys cubic with a = -0.5, evaluated for |t| <= 2
    a = -0.5
    t = np.abs(t)
    w = np.where(
        t <= 1.0,
        (a + 2.0) * t**3 - (a + 3.0) * t**2 + 1.0,
        np.where(t < 2.0, a * t**3 - 5.0 * a * t**2 + 8.0 * a * t - 4.0 * a, 0.0),
    )
    return w


def _bicubic_1d(n_in: int, n_out: int):
    """Tap indices (clamped) and weights for one separable pass."""
    i = np.arange(n_out, dtype=np.float64)
    src = (i + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    offsets = np.array([-1, 0, 1, 2])
    idx = base[:, None] + offsets[None, :]
    w = _catmull_rom(frac[:, None] - offsets[None, :])
    w /= w.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, n_in - 1)
    return idx, w


def resize_bicubic(r: Raster, out_w: int, out_h: int) -> Raster:
    """Catmull-Rom bicubic (a = -0.5), clamp-to-edge, horizontal then vertical."""
    if out_w < 1 or out_h < 1:
        raise RasterError("target size must be >= 1")
    f = r.to_float()
    f = _apply_pass(f, *_bicubic_1d(r.width, out_w), axis=1)
    f = _apply_pass(f, *_bicubic_1d(r.height, out_h), axis=0)
    return Raster.from_float(f)


def _apply_pass(f: np.ndarray, idx: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    if axis == 1:
        taps = f[:, idx, :]  # (h, out, 4, c)
        return np.einsum("hotc,ot->hoc", taps, w)
    taps = f[idx, :, :]  # (out, 4, w, c)
    return np.einsum("otwc,ot->owc", taps, w)


def resize_nearest(r: Raster, out_w: int, out_h: int) -> Raster:
    """Nearest neighbor; source index = floor((i + 0.5) * in / out)."""
    if out_w < 1 or out_h < 1:
        raise RasterError("target size must be >= 1")
    xs = np.minimum((np.arange(out_w) + 0.5) * r.width / out_w, r.width - 1).astype(np.int64)
    ys = np.minimum((np.arange(out_h) + 0.5) * r.height / out_h, r.height - 1).astype(np.int64)
    return Raster(r.data[np.ix_(ys, xs)])
