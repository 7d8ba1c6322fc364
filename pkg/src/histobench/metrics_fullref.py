"""Full-reference metrics: PSNR/SSIM/MSE, nuclear intensity/texture L1
metrics inside ingested instance masks, and embedding cosine similarity."""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from PIL import Image

from .raster import Raster, ensure_gray

GLCM_LEVELS = 32
GLCM_OFFSETS = ((1, 0), (0, 1), (1, 1), (1, -1))  # (dx, dy)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0


class MetricError(ValueError):
    pass


class MaskError(ValueError):
    pass


def _check_dims(a: Raster, b: Raster):
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels):
        raise MetricError(
            f"dimension mismatch: {a.width}x{a.height}x{a.channels} vs "
            f"{b.width}x{b.height}x{b.channels}"
        )


def mse(a: Raster, b: Raster) -> float:
    _check_dims(a, b)
    d = a.data.astype(np.float64) - b.data.astype(np.float64)
    return float(np.mean(d * d))


def psnr(a: Raster, b: Raster) -> float:
    """10 log10(255^2 / MSE); +inf when the images are identical."""
    m = mse(a, b)
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / m)


def _ssim_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(ax**2) / (2.0 * SSIM_SIGMA**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a: Raster, b: Raster) -> float:
    """Mean local SSIM over valid 11x11 Gaussian windows (Wang et al.
    constants, L = 255). RGB inputs are converted to grayscale first."""
    _check_dims(a, b)
    x = ensure_gray(a).data[:, :, 0].astype(np.float64)
    y = ensure_gray(b).data[:, :, 0].astype(np.float64)
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise MetricError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    w = _ssim_window()
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2

    def filt(img):
        v = np.lib.stride_tricks.sliding_window_view(img, (SSIM_WINDOW, SSIM_WINDOW))
        return np.einsum("hwij,ij->hw", v, w)

    mu_x = filt(x)
    mu_y = filt(y)
    xx = filt(x * x) - mu_x * mu_x
    yy = filt(y * y) - mu_y * mu_y
    xy = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


# ----------------------------------------------------------------------------
# Instance masks and nuclear features


@dataclasses.dataclass(frozen=True)
class InstanceMask:
    labels: np.ndarray  # (h, w) int32, 0 = background

    def __post_init__(self):
        a = np.asarray(self.labels)
        if a.ndim != 2:
            raise MaskError("mask must be 2-D")
        if np.any(a < 0):
            raise MaskError("labels must be nonnegative")
        object.__setattr__(self, "labels", a.astype(np.int32))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def instance_ids(self):
        ids = np.unique(self.labels)
        return [int(i) for i in ids if i != 0]


def load_mask(path) -> InstanceMask:
    """Load a 16-bit grayscale PNG instance label map."""
    img = Image.open(path)
    img.load()
    if img.format != "PNG":
        raise MaskError(f"{path}: mask must be PNG")
    if img.mode not in ("I", "I;16", "I;16B"):
        raise MaskError(f"{path}: mask must be 16-bit grayscale, got mode {img.mode}")
    arr = np.asarray(img, dtype=np.int64)
    return InstanceMask(arr)


def save_mask(m: InstanceMask, path) -> None:
    Image.fromarray(m.labels.astype(np.uint16)).save(path, format="PNG")


def intensity_features(gray: Raster, m: InstanceMask, instance_id: int):
    """Population (mean, std, skewness, excess kurtosis) of the nucleus's
    grayscale values; skew/kurt are 0 by convention when the variance is 0."""
    g = ensure_gray(gray)
    if (m.height, m.width) != (g.height, g.width):
        raise MetricError("mask dims do not match image dims")
    sel = m.labels == instance_id
    if instance_id == 0 or not sel.any():
        raise MaskError(f"instance id {instance_id} not present in mask")
    v = g.data[:, :, 0][sel].astype(np.float64)
    mean = float(v.mean())
    d = v - mean
    m2 = float(np.mean(d**2))
    if m2 == 0.0:
        return (mean, 0.0, 0.0, 0.0)
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    return (mean, math.sqrt(m2), m3 / m2**1.5, m4 / m2**2 - 3.0)


def glcm(gray: Raster, m: InstanceMask, instance_id: int, levels: int = GLCM_LEVELS,
         offsets=GLCM_OFFSETS) -> np.ndarray:
    """Symmetric normalized co-occurrence matrix over pixel pairs where both
    pixels belong to the instance; distance-1 offsets in 4 directions."""
    if levels < 2:
        raise MetricError("levels must be >= 2")
    g = ensure_gray(gray)
    if (m.height, m.width) != (g.height, g.width):
        raise MetricError("mask dims do not match image dims")
    sel = m.labels == instance_id
    if instance_id == 0 or not sel.any():
        raise MaskError(f"instance id {instance_id} not present in mask")
    q = (g.data[:, :, 0].astype(np.int64) * levels) // 256
    h, w = q.shape
    mat = np.zeros((levels, levels), dtype=np.float64)
    for dx, dy in offsets:
        # Slice the grid so (y, x) and (y + dy, x + dx) are both in bounds.
        ys = slice(max(0, -dy), h - max(0, dy))
        xs = slice(max(0, -dx), w - max(0, dx))
        ys2 = slice(max(0, dy), h - max(0, -dy))
        xs2 = slice(max(0, dx), w - max(0, -dx))
        both = sel[ys, xs] & sel[ys2, xs2]
        if not both.any():
            continue
        i = q[ys, xs][both]
        j = q[ys2, xs2][both]
        np.add.at(mat, (i, j), 1.0)
        np.add.at(mat, (j, i), 1.0)
    total = mat.sum()
    if total == 0.0:
        raise MetricError(f"instance {instance_id} has no co-occurring pixel pairs")
    return mat / total


def texture_features(p: np.ndarray):
    """(contrast, dissimilarity, homogeneity, energy) of a normalized GLCM."""
    n = p.shape[0]
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    diff = (i - j).astype(np.float64)
    contrast = float(np.sum(p * diff**2))
    dissimilarity = float(np.sum(p * np.abs(diff)))
    homogeneity = float(np.sum(p / (1.0 + diff**2)))
    energy = float(math.sqrt(np.sum(p * p)))
    return (contrast, dissimilarity, homogeneity, energy)


@dataclasses.dataclass(frozen=True)
class NuclearL1Result:
    l1_texture: float | None
    l1_intensity: float | None
    nucleus_count: int
    skipped: int

    @property
    def empty(self) -> bool:
        return self.l1_texture is None


def l1_nuclear_metrics(hr: Raster, sr: Raster, m: InstanceMask) -> NuclearL1Result:
    """Per-nucleus L1 between HR and SR feature vectors, averaged over nuclei.

    Nuclei with no valid co-occurrence pairs are skipped and counted; with
    zero usable nuclei the result is explicitly empty rather than 0.
    """
    _check_dims(hr, sr)
    if (m.height, m.width) != (hr.height, hr.width):
        raise MetricError("mask dims do not match image dims")
    hr_g = ensure_gray(hr)
    sr_g = ensure_gray(sr)
    tex_sum = 0.0
    inten_sum = 0.0
    used = 0
    skipped = 0
    for nid in m.instance_ids:
        try:
            p_hr = glcm(hr_g, m, nid)
            p_sr = glcm(sr_g, m, nid)
        except MetricError:
            skipped += 1
            continue
        t_hr = texture_features(p_hr)
        t_sr = texture_features(p_sr)
        i_hr = intensity_features(hr_g, m, nid)
        i_sr = intensity_features(sr_g, m, nid)
        tex_sum += sum(abs(a - b) for a, b in zip(t_sr, t_hr))
        inten_sum += sum(abs(a - b) for a, b in zip(i_sr, i_hr))
        used += 1
    if used == 0:
        return NuclearL1Result(None, None, 0, skipped)
    return NuclearL1Result(tex_sum / used, inten_sum / used, used, skipped)


def embedding_cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape or a.size < 1:
        raise MetricError("embeddings must be equal-length 1-D vectors")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise MetricError("cosine similarity undefined for zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


@dataclasses.dataclass(frozen=True)
class FullRefResult:
    psnr: float
    ssim: float
    mse: float
    l1_texture: float | None
    l1_intensity: float | None
    nucleus_count: int


def full_reference(hr: Raster, sr: Raster, mask: InstanceMask | None = None) -> FullRefResult:
    nuc = (
        l1_nuclear_metrics(hr, sr, mask)
        if mask is not None
        else NuclearL1Result(None, None, 0, 0)
    )
    return FullRefResult(
        psnr=psnr(hr, sr),
        ssim=ssim(hr, sr),
        mse=mse(hr, sr),
        l1_texture=nuc.l1_texture,
        l1_intensity=nuc.l1_intensity,
        nucleus_count=nuc.nucleus_count,
    )
