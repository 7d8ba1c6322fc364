"""Inference geometry (scale, multiple-of-64 padding, /8 latent dims) and
whole-slide tiling with overlap and feathered seam-free stitching."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .raster import Raster, load_image, save_image

SUPPORTED_SCALES = (2, 4, 8)
PAD_MULTIPLE = 64
LATENT_DOWNSCALE = 8
LATENT_CHANNELS = 4

DEFAULT_TILE = 512
DEFAULT_OVERLAP = 64


class TilerError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class InferenceGeometry:
    lr_w: int
    lr_h: int
    scale: int
    target_w: int
    target_h: int
    padded_w: int
    padded_h: int
    latent_w: int
    latent_h: int
    latent_channels: int = LATENT_CHANNELS


def inference_geometry(lr_w: int, lr_h: int, s: int) -> InferenceGeometry:
    """Target = s * lr; padded = next multiple of 64; latent = padded / 8."""
    if s not in SUPPORTED_SCALES:
        raise TilerError(f"scale must be one of {SUPPORTED_SCALES}")
    if lr_w < 1 or lr_h < 1:
        raise TilerError("LR dims must be >= 1")
    tw, th = s * lr_w, s * lr_h
    pw = -(-tw // PAD_MULTIPLE) * PAD_MULTIPLE
    ph = -(-th // PAD_MULTIPLE) * PAD_MULTIPLE
    return InferenceGeometry(
        lr_w=lr_w, lr_h=lr_h, scale=s,
        target_w=tw, target_h=th,
        padded_w=pw, padded_h=ph,
        latent_w=pw // LATENT_DOWNSCALE, latent_h=ph // LATENT_DOWNSCALE,
    )


def pad_to(r: Raster, w: int, h: int) -> Raster:
    """Reflect-101 extension on the right/bottom only."""
    if w < r.width or h < r.height:
        raise TilerError("pad target must be >= current dims")
    pw, ph = w - r.width, h - r.height
    if pw >= r.width or ph >= r.height:
        # np.pad reflect cannot exceed dim-1; grow in steps.
        out = r
        while out.width < w or out.height < h:
            step_w = min(w - out.width, out.width - 1) if out.width > 1 else 0
            step_h = min(h - out.height, out.height - 1) if out.height > 1 else 0
            if step_w == 0 and step_h == 0:
                raise TilerError("cannot reflect-pad a 1-pixel dimension")
            out = Raster(np.pad(out.data, ((0, step_h), (0, step_w), (0, 0)), mode="reflect"))
        return out
    return Raster(np.pad(r.data, ((0, ph), (0, pw), (0, 0)), mode="reflect"))


def crop_to(r: Raster, w: int, h: int) -> Raster:
    if w > r.width or h > r.height:
        raise TilerError("crop target must be <= current dims")
    return Raster(r.data[:h, :w, :])


@dataclasses.dataclass(frozen=True)
class TileRect:
    row: int
    col: int
    x: int
    y: int
    w: int
    h: int


@dataclasses.dataclass(frozen=True)
class TileGrid:
    src_w: int
    src_h: int
    tile: int
    overlap: int
    rects: tuple

    def to_json(self) -> str:
        return json.dumps({
            "src_w": self.src_w, "src_h": self.src_h,
            "tile": self.tile, "overlap": self.overlap,
            "rects": [dataclasses.asdict(r) for r in self.rects],
        }, sort_keys=True, indent=1) + "\n"

    @staticmethod
    def from_json(text: str) -> "TileGrid":
        d = json.loads(text)
        rects = tuple(TileRect(**r) for r in d["rects"])
        return TileGrid(d["src_w"], d["src_h"], d["tile"], d["overlap"], rects)


def _starts(src: int, tile: int, stride: int):
    if src == tile:
        return [0]
    starts = list(range(0, src - tile, stride))
    # Last tile shifts so it ends exactly at the border.
    starts.append(src - tile)
    return starts


def tile_plan(src_w: int, src_h: int, tile: int, overlap: int) -> TileGrid:
    if overlap < 0 or tile <= overlap:
        raise TilerError("need tile > overlap >= 0")
    if tile > src_w or tile > src_h:
        raise TilerError("tile larger than source")
    stride = tile - overlap
    xs = _starts(src_w, tile, stride)
    ys = _starts(src_h, tile, stride)
    rects = tuple(
        TileRect(row=ri, col=ci, x=x, y=y, w=tile, h=tile)
        for ri, y in enumerate(ys)
        for ci, x in enumerate(xs)
    )
    return TileGrid(src_w, src_h, tile, overlap, rects)


def cut(r: Raster, grid: TileGrid):
    """Extract the tiles of a grid, row-major."""
    return [Raster(r.data[t.y : t.y + t.h, t.x : t.x + t.w, :]) for t in grid.rects]


def _ramp(n: int, overlap: int) -> np.ndarray:
    """Per-pixel feather weight along one axis: rises from the tile edge to 1
    at `overlap` pixels inward; strictly positive so normalization is safe."""
    d = np.arange(n, dtype=np.float64)
    d = np.minimum(d, n - 1 - d)
    if overlap == 0:
        return np.ones(n)
    return np.minimum(1.0, (d + 1.0) / (overlap + 1.0))


def stitch(tiles, grid: TileGrid) -> Raster:
    """Weighted-average blend; weights are separable linear ramps normalized
    to a partition of unity at every output pixel."""
    if len(tiles) != len(grid.rects):
        raise TilerError(f"expected {len(grid.rects)} tiles, got {len(tiles)}")
    channels = tiles[0].channels
    num = np.zeros((grid.src_h, grid.src_w, channels))
    den = np.zeros((grid.src_h, grid.src_w, 1))
    for t, rect in zip(tiles, grid.rects):
        if (t.width, t.height) != (rect.w, rect.h) or t.channels != channels:
            raise TilerError(f"tile at r{rect.row}_c{rect.col} has wrong dims")
        wx = _ramp(rect.w, grid.overlap)
        wy = _ramp(rect.h, grid.overlap)
        w = (wy[:, None] * wx[None, :])[:, :, None]
        num[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w, :] += w * t.to_float()
        den[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w, :] += w
    if np.any(den == 0.0):
        raise TilerError("grid does not cover the source")
    return Raster.from_float(num / den)


def blend_weight_sums(grid: TileGrid) -> np.ndarray:
    """Normalized per-pixel weight totals (all 1 by construction); exposed for
    the partition-of-unity check."""
    den = np.zeros((grid.src_h, grid.src_w))
    for rect in grid.rects:
        wx = _ramp(rect.w, grid.overlap)
        wy = _ramp(rect.h, grid.overlap)
        den[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w] += wy[:, None] * wx[None, :]
    return den


def tile_name(rect: TileRect) -> str:
    return f"r{rect.row}_c{rect.col}.png"


def write_tiles(r: Raster, grid: TileGrid, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t, rect in zip(cut(r, grid), grid.rects):
        save_image(t, out / tile_name(rect))
    (out / "grid.json").write_text(grid.to_json(), encoding="utf-8")


def read_tiles(in_dir):
    src = Path(in_dir)
    grid_path = src / "grid.json"
    if not grid_path.exists():
        raise TilerError(f"missing {grid_path}")
    grid = TileGrid.from_json(grid_path.read_text(encoding="utf-8"))
    tiles = []
    for rect in grid.rects:
        p = src / tile_name(rect)
        if not p.exists():
            raise TilerError(f"missing tile {p}")
        tiles.append(load_image(p))
    return tiles, grid
