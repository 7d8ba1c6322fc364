"""Synthetic degradation: blur kernels, noise, JPEG artifacts, and the
Real-ESRGAN / CodeFormer style recipes used to build HR/LR training pairs."""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np
from scipy import ndimage

from .jpegcodec import jpeg_roundtrip
from .raster import Raster, resize_bicubic, resize_nearest

KERNEL_SUM_TOL = 1e-9


class DegradeError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class Kernel:
    size: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if self.size % 2 == 0:
            raise DegradeError("kernel size must be odd")
        if w.shape != (self.size, self.size):
            raise DegradeError(f"weights must be {self.size}x{self.size}")
        if np.any(w < 0):
            raise DegradeError("kernel weights must be nonnegative")
        if abs(w.sum() - 1.0) > KERNEL_SUM_TOL:
            raise DegradeError("kernel weights must sum to 1")
        object.__setattr__(self, "weights", w)


def gaussian_kernel(sigma_x: float, sigma_y: float, theta: float, size: int) -> Kernel:
    """Rotated anisotropic Gaussian sampled at pixel centers, sum-normalized."""
    if sigma_x <= 0 or sigma_y <= 0:
        raise DegradeError("sigma must be positive")
    if size % 2 == 0 or size < 3:
        raise DegradeError("size must be odd and >= 3")
    half = size // 2
    y, x = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    c, s = math.cos(theta), math.sin(theta)
    # Rotate coordinates into the kernel's principal axes.
    u = c * x + s * y
    v = -s * x + c * y
    w = np.exp(-0.5 * ((u / sigma_x) ** 2 + (v / sigma_y) ** 2))
    return Kernel(size, w / w.sum())


def box_kernel(radius: int) -> Kernel:
    if radius < 0:
        raise DegradeError("radius must be >= 0")
    n = 2 * radius + 1
    return Kernel(n, np.full((n, n), 1.0 / (n * n)))


def gaussian_kernel_for_sigma(sigma: float) -> Kernel:
    """Isotropic kernel sized to cover +/-3 sigma (min 3)."""
    size = max(3, 2 * int(math.ceil(3.0 * sigma)) + 1)
    return gaussian_kernel(sigma, sigma, 0.0, size)


def convolve(r: Raster, k: Kernel) -> Raster:
    """Per-channel 2-D correlation, reflect-101 borders, quantize at the end."""
    f = r.to_float()
    out = np.empty_like(f)
    for c in range(r.channels):
        out[:, :, c] = ndimage.correlate(f[:, :, c], k.weights, mode="mirror")
    return Raster.from_float(out)


def add_gaussian_noise(r: Raster, sigma: float, seed: int) -> Raster:
    if sigma < 0:
        raise DegradeError("sigma must be >= 0")
    if sigma == 0:
        return r
    rng = np.random.default_rng(np.random.Philox(key=seed))
    f = r.to_float() + rng.normal(0.0, sigma, size=r.data.shape)
    return Raster.from_float(f)


def add_poisson_noise(r: Raster, peak: float, seed: int) -> Raster:
    if peak <= 0:
        raise DegradeError("peak must be > 0")
    rng = np.random.default_rng(np.random.Philox(key=seed))
    f = rng.poisson(r.to_float() * peak).astype(np.float64) / peak
    return Raster.from_float(f)


# ----------------------------------------------------------------------------
# Recipes

RESIZE_MODES = ("bicubic", "nearest")


@dataclasses.dataclass(frozen=True)
class Stage:
    """One degradation stage with uniform parameter ranges.

    kind: blur | resize | gaussian_noise | poisson_noise | jpeg | resize_back
    params: kind-specific range dict (see the preset constructors).
    """

    kind: str
    params: dict

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": self.params}

    @staticmethod
    def from_json(d: dict) -> "Stage":
        return Stage(d["kind"], d["params"])


@dataclasses.dataclass(frozen=True)
class DegradationRecipe:
    stages: tuple
    repeat_count: int = 1

    def __post_init__(self):
        if self.repeat_count not in (1, 2):
            raise DegradeError("repeat_count must be 1 or 2")
        for st in self.stages:
            for k, v in st.params.items():
                if k.endswith("_range") and not v[0] <= v[1]:
                    raise DegradeError(f"empty range {k} in stage {st.kind}")

    def to_json(self) -> dict:
        return {
            "repeat_count": self.repeat_count,
            "stages": [s.to_json() for s in self.stages],
        }

    @staticmethod
    def from_json(d: dict) -> "DegradationRecipe":
        return DegradationRecipe(
            tuple(Stage.from_json(s) for s in d["stages"]), d["repeat_count"]
        )


@dataclasses.dataclass(frozen=True)
class DegradedPair:
    hr: Raster
    lr: Raster
    recipe_trace: list
    seed: int


def realesrgan_recipe() -> DegradationRecipe:
    """Second-order blur/resize/noise/jpeg pipeline, Real-ESRGAN style."""
    stages = (
        Stage("blur", {"sigma_range": [0.2, 3.0], "aniso_prob": 0.5,
                       "theta_range": [0.0, math.pi], "size": 21}),
        Stage("resize", {"factor_range": [1.0, 4.0], "modes": list(RESIZE_MODES)}),
        Stage("gaussian_noise", {"sigma_range": [0.0, 25.0 / 255.0],
                                 "poisson_prob": 0.5,
                                 "poisson_peak_range": [60.0, 300.0]}),
        Stage("jpeg", {"quality_range": [30, 95]}),
    )
    return DegradationRecipe(stages, repeat_count=2)


def codeformer_recipe() -> DegradationRecipe:
    """Single-pass blur/resize/noise/jpeg with a resize back to input dims."""
    stages = (
        Stage("blur", {"sigma_range": [0.2, 3.0], "aniso_prob": 0.5,
                       "theta_range": [0.0, math.pi], "size": 21}),
        Stage("resize", {"factor_range": [1.0, 4.0], "modes": list(RESIZE_MODES)}),
        Stage("gaussian_noise", {"sigma_range": [0.0, 25.0 / 255.0],
                                 "poisson_prob": 0.0,
                                 "poisson_peak_range": [60.0, 300.0]}),
        Stage("jpeg", {"quality_range": [30, 95]}),
        Stage("resize_back", {"modes": ["bicubic"]}),
    )
    return DegradationRecipe(stages, repeat_count=1)


def _stage_rng(seed: int, repeat: int, stage_index: int, salt: int = 0) -> np.random.Generator:
    # Counter-based stream keyed on (seed, pass, stage): results do not
    # depend on how work is scheduled across threads.
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(repeat, stage_index, salt))
    return np.random.default_rng(np.random.Philox(ss))


def _apply_stage(img: Raster, stage: Stage, rng: np.random.Generator,
                 orig_dims, noise_seed: int):
    p = stage.params
    if stage.kind == "blur":
        lo, hi = p["sigma_range"]
        sigma_x = float(rng.uniform(lo, hi))
        if rng.random() < p.get("aniso_prob", 0.0):
            sigma_y = float(rng.uniform(lo, hi))
            theta = float(rng.uniform(*p.get("theta_range", [0.0, math.pi])))
        else:
            sigma_y, theta = sigma_x, 0.0
        k = gaussian_kernel(sigma_x, sigma_y, theta, int(p.get("size", 21)))
        return convolve(img, k), {"kind": "blur", "sigma_x": sigma_x,
                                  "sigma_y": sigma_y, "theta": theta,
                                  "size": int(p.get("size", 21))}
    if stage.kind == "blur_box":
        radius = int(p["radius"])
        return convolve(img, box_kernel(radius)), {"kind": "blur_box", "radius": radius}
    if stage.kind == "resize":
        f = float(rng.uniform(*p["factor_range"]))
        mode = p["modes"][int(rng.integers(len(p["modes"])))]
        w = max(1, round(img.width / f))
        h = max(1, round(img.height / f))
        fn = resize_bicubic if mode == "bicubic" else resize_nearest
        return fn(img, w, h), {"kind": "resize", "factor": f, "mode": mode,
                               "width": w, "height": h}
    if stage.kind == "resize_back":
        mode = p["modes"][int(rng.integers(len(p["modes"])))]
        w, h = orig_dims
        fn = resize_bicubic if mode == "bicubic" else resize_nearest
        return fn(img, w, h), {"kind": "resize_back", "mode": mode,
                               "width": w, "height": h}
    if stage.kind == "gaussian_noise":
        if rng.random() < p.get("poisson_prob", 0.0):
            peak = float(rng.uniform(*p["poisson_peak_range"]))
            return add_poisson_noise(img, peak, noise_seed), {
                "kind": "poisson_noise", "peak": peak, "seed": noise_seed}
        sigma = float(rng.uniform(*p["sigma_range"]))
        return add_gaussian_noise(img, sigma, noise_seed), {
            "kind": "gaussian_noise", "sigma": sigma, "seed": noise_seed}
    if stage.kind == "poisson_noise":
        peak = float(rng.uniform(*p["peak_range"]))
        return add_poisson_noise(img, peak, noise_seed), {
            "kind": "poisson_noise", "peak": peak, "seed": noise_seed}
    if stage.kind == "jpeg":
        lo, hi = p["quality_range"]
        q = int(rng.integers(int(lo), int(hi) + 1))
        return jpeg_roundtrip(img, q), {"kind": "jpeg", "quality": q}
    raise DegradeError(f"unknown stage kind {stage.kind}")


def apply_recipe(hr: Raster, recipe: DegradationRecipe, s: int, seed: int) -> DegradedPair:
    """Run the recipe then resize to exactly (hr / s); records a replayable trace."""
    if hr.width % s or hr.height % s:
        raise DegradeError(f"HR dims {hr.width}x{hr.height} not divisible by scale {s}")
    img = hr
    trace = []
    for rep in range(recipe.repeat_count):
        for si, stage in enumerate(recipe.stages):
            rng = _stage_rng(seed, rep, si)
            noise_seed = int(_stage_rng(seed, rep, si, salt=1).integers(0, 2**63))
            img, rec = _apply_stage(img, stage, rng, (hr.width, hr.height), noise_seed)
            trace.append(rec)
    target_w, target_h = hr.width // s, hr.height // s
    if (img.width, img.height) != (target_w, target_h):
        img = resize_bicubic(img, target_w, target_h)
        trace.append({"kind": "final_resize", "mode": "bicubic",
                      "width": target_w, "height": target_h})
    return DegradedPair(hr=hr, lr=img, recipe_trace=trace, seed=seed)


def replay_trace(hr: Raster, trace: list) -> Raster:
    """Re-apply recorded stage parameters; bit-identical to the original LR."""
    img = hr
    for rec in trace:
        kind = rec["kind"]
        if kind == "blur":
            k = gaussian_kernel(rec["sigma_x"], rec["sigma_y"], rec["theta"], rec["size"])
            img = convolve(img, k)
        elif kind == "blur_box":
            img = convolve(img, box_kernel(rec["radius"]))
        elif kind in ("resize", "resize_back", "final_resize"):
            fn = resize_bicubic if rec["mode"] == "bicubic" else resize_nearest
            img = fn(img, rec["width"], rec["height"])
        elif kind == "gaussian_noise":
            img = add_gaussian_noise(img, rec["sigma"], rec["seed"])
        elif kind == "poisson_noise":
            img = add_poisson_noise(img, rec["peak"], rec["seed"])
        elif kind == "jpeg":
            img = jpeg_roundtrip(img, rec["quality"])
        else:
            raise DegradeError(f"unknown trace entry {kind}")
    return img


def save_trace(trace: list, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(trace, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_trace(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


RECIPES = {"realesrgan": realesrgan_recipe, "codeformer": codeformer_recipe}


def get_recipe(name_or_path: str) -> DegradationRecipe:
    if name_or_path in RECIPES:
        return RECIPES[name_or_path]()
    with open(name_or_path, encoding="utf-8") as fh:
        return DegradationRecipe.from_json(json.load(fh))
