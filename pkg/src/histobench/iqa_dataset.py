"""Blur-scored IQA dataset curation: for each HR patch, a ladder of box or
Gaussian blurred copies scored from 10.0 (pristine) down to 0.0."""

from __future__ import annotations

import csv
import dataclasses
from pathlib import Path

import numpy as np

from . import degrade
from .raster import Raster, load_image, save_image

LEVEL_COUNT = 10  # levels 0..10 inclusive
BLUR_TYPES = ("box", "gaussian")


class CurationError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class ScoredSample:
    image_path: str
    source_hr_path: str
    blur_type: str
    level: int
    param: float
    score: float


@dataclasses.dataclass(frozen=True)
class Manifest:
    samples: tuple
    blur_type: str
    level_count: int = LEVEL_COUNT

    def __len__(self) -> int:
        return len(self.samples)


def level_param(blur_type: str, level: int) -> float:
    """Box radius = level; Gaussian sigma = 0.5 * level."""
    if blur_type == "box":
        return float(level)
    if blur_type == "gaussian":
        return 0.5 * level
    raise CurationError(f"unknown blur type {blur_type}")


def level_score(level: int) -> float:
    return round(10.0 - level, 1)


def blur_at_level(img: Raster, blur_type: str, level: int) -> Raster:
    if level == 0:
        return img
    if blur_type == "box":
        return degrade.convolve(img, degrade.box_kernel(level))
    return degrade.convolve(img, degrade.gaussian_kernel_for_sigma(0.5 * level))


def curate(hr_dir, blur_type: str, out_dir) -> Manifest:
    """Write the blurred ladder for every PNG in hr_dir plus a manifest CSV."""
    if blur_type not in BLUR_TYPES:
        raise CurationError(f"blur_type must be one of {BLUR_TYPES}")
    hr_paths = sorted(Path(hr_dir).glob("*.png"))
    if not hr_paths:
        raise CurationError(f"no PNG files in {hr_dir}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = []
    for hr_path in hr_paths:
        img = load_image(hr_path)
        for level in range(LEVEL_COUNT + 1):
            dst = out / f"{hr_path.stem}_{blur_type}_L{level:02d}.png"
            save_image(blur_at_level(img, blur_type, level), dst)
            samples.append(ScoredSample(
                image_path=str(dst),
                source_hr_path=str(hr_path),
                blur_type=blur_type,
                level=level,
                param=level_param(blur_type, level),
                score=level_score(level),
            ))
    manifest = Manifest(tuple(samples), blur_type)
    save_manifest(manifest, out / f"manifest_{blur_type}.csv")
    return manifest


MANIFEST_COLUMNS = ["image_path", "source_hr_path", "blur_type", "level", "param", "score"]


def save_manifest(m: Manifest, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for s in m.samples:
            w.writerow([s.image_path, s.source_hr_path, s.blur_type,
                        s.level, s.param, f"{s.score:.1f}"])


def load_manifest(path) -> Manifest:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise CurationError(f"empty manifest {path}")
    samples = tuple(
        ScoredSample(r["image_path"], r["source_hr_path"], r["blur_type"],
                     int(r["level"]), float(r["param"]), float(r["score"]))
        for r in rows
    )
    return Manifest(samples, samples[0].blur_type)


def split_manifest(m: Manifest, train_frac: float, seed: int):
    """Split by source image so all levels of one source stay on one side."""
    if not 0.0 < train_frac < 1.0:
        raise CurationError("train_frac must be in (0, 1)")
    sources = sorted({s.source_hr_path for s in m.samples})
    if len(sources) < 2:
        raise CurationError("need at least 2 source images to split")
    rng = np.random.default_rng(seed)
    order = [sources[i] for i in rng.permutation(len(sources))]
    n_train = min(max(int(round(train_frac * len(sources))), 1), len(sources) - 1)
    train_set = set(order[:n_train])
    train = tuple(s for s in m.samples if s.source_hr_path in train_set)
    test = tuple(s for s in m.samples if s.source_hr_path not in train_set)
    return Manifest(train, m.blur_type), Manifest(test, m.blur_type)
