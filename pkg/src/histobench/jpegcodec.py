"""Baseline JPEG round-trip in the transform domain.

Entropy coding is lossless, so encode-then-decode is equivalent to: color
transform, 4:2:0 chroma subsampling, 8x8 DCT, quantize/dequantize with the
Annex-K tables scaled by the IJG quality rule, inverse DCT, chroma upsampling
and inverse color transform. That is what is implemented here.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dctn, idctn

from .raster import Raster

# JPEG Annex-K base quantization tables.
LUMA_BASE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int64,
)
CHROMA_BASE = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.int64,
)


def quality_scale(quality: int) -> int:
    """IJG scale factor: 5000/q below 50, 200 - 2q at or above."""
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in [1, 100], got {quality}")
    return 5000 // quality if quality < 50 else 200 - 2 * quality


def quant_tables(quality: int):
    """Annex-K tables scaled by quality; entries clamped to [1, 255]."""
    scale = quality_scale(quality)
    luma = np.clip((LUMA_BASE * scale + 50) // 100, 1, 255)
    chroma = np.clip((CHROMA_BASE * scale + 50) // 100, 1, 255)
    return luma, chroma


def _pad_replicate(plane: np.ndarray, mult: int) -> np.ndarray:
    h, w = plane.shape
    ph = (-h) % mult
    pw = (-w) % mult
    return np.pad(plane, ((0, ph), (0, pw)), mode="edge")


def _blockwise_quant(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    """DCT, quantize, dequantize, inverse DCT on a level-shifted float plane."""
    h, w = plane.shape
    blocks = plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)
    coeffs = dctn(blocks, type=2, norm="ortho", axes=(2, 3))
    # JPEG's orthonormal scaling differs from scipy's by nothing: both are
    # the orthonormal 2-D DCT-II, so the Annex-K tables apply directly.
    q = np.round(coeffs / table) * table
    out = idctn(q, type=2, norm="ortho", axes=(2, 3))
    return out.transpose(0, 2, 1, 3).reshape(h, w)


def _rgb_to_ycbcr(rgb: np.ndarray):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168735892 * r - 0.331264108 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418687589 * g - 0.081312411 * b
    return y, cb, cr


def _ycbcr_to_rgb(y, cb, cr):
    r = y + 1.402 * (cr - 128.0)
    g = y - 0.344136286 * (cb - 128.0) - 0.714136286 * (cr - 128.0)
    b = y + 1.772 * (cb - 128.0)
    return np.stack([r, g, b], axis=-1)


def jpeg_roundtrip(r: Raster, quality: int) -> Raster:
    """Baseline JPEG encode-then-decode at the given IJG quality."""
    luma_t, chroma_t = quant_tables(quality)
    h, w = r.height, r.width
    pix = r.data.astype(np.float64)
    if r.channels == 1:
        y = _pad_replicate(pix[:, :, 0], 8)
        out = _blockwise_quant(y - 128.0, luma_t) + 128.0
        out = out[:h, :w]
        return Raster(np.clip(np.round(out), 0, 255).astype(np.uint8)[:, :, None])

    y, cb, cr = _rgb_to_ycbcr(pix)
    # Luma padded to a multiple of 16 so the 2x-downsampled chroma planes
    # tile into 8x8 blocks.
    y = _pad_replicate(y, 16)
    cb = _pad_replicate(cb, 16)
    cr = _pad_replicate(cr, 16)
    # 4:2:0 subsampling by 2x2 averaging.
    cb_s = cb.reshape(cb.shape[0] // 2, 2, cb.shape[1] // 2, 2).mean(axis=(1, 3))
    cr_s = cr.reshape(cr.shape[0] // 2, 2, cr.shape[1] // 2, 2).mean(axis=(1, 3))

    y_out = _blockwise_quant(y - 128.0, luma_t) + 128.0
    cb_out = _blockwise_quant(cb_s - 128.0, chroma_t) + 128.0
    cr_out = _blockwise_quant(cr_s - 128.0, chroma_t) + 128.0

    # Decoder-side replication upsampling.
    cb_up = np.repeat(np.repeat(cb_out, 2, axis=0), 2, axis=1)
    cr_up = np.repeat(np.repeat(cr_out, 2, axis=0), 2, axis=1)
    rgb = _ycbcr_to_rgb(y_out, cb_up, cr_up)[:h, :w]
    return Raster(np.clip(np.round(rgb), 0, 255).astype(np.uint8))
