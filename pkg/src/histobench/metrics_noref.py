"""Trainable blind blur scorer: handcrafted sharpness features plus a
closed-form ridge regression fit on the curated blur-score manifests."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from itertools import combinations

import numpy as np
from scipy import linalg, ndimage, stats

from .iqa_dataset import Manifest
from .raster import Raster, ensure_gray, load_image

EPS = 1e-8
EDGE_THRESHOLD = 10.0 / 255.0
BLOCK = 8
FEATURE_DIM = 7
BIAS_INDEX = 6

FEATURE_NAMES = (
    "laplacian_var",
    "grad_mean",
    "grad_std",
    "hf_energy_ratio",
    "local_contrast",
    "edge_density",
    "bias",
)

_LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


class ScorerError(ValueError):
    pass


def blur_features(gray: Raster) -> np.ndarray:
    """7-vector of sharpness statistics; all non-bias entries vanish on a
    constant image."""
    g = ensure_gray(gray)
    if g.width < 16 or g.height < 16:
        raise ScorerError("image must be at least 16x16")
    f = g.to_float()[:, :, 0]

    lap = ndimage.correlate(f, _LAPLACIAN, mode="mirror")
    lap_var = float(lap.var())

    gy, gx = np.gradient(f)
    grad = np.hypot(gx, gy)
    grad_mean = float(grad.mean())
    grad_std = float(grad.std())

    box = ndimage.uniform_filter(f, size=3, mode="mirror")
    hf_ratio = float((f - box).var() / max(f.var(), EPS))

    h, w = f.shape
    hb = (h // BLOCK) * BLOCK
    wb = (w // BLOCK) * BLOCK
    means = f[:hb, :wb].reshape(hb // BLOCK, BLOCK, wb // BLOCK, BLOCK).mean(axis=(1, 3))
    local = f[:hb, :wb] - np.repeat(np.repeat(means, BLOCK, axis=0), BLOCK, axis=1)
    local_contrast = float(local.std())

    edge_density = float(np.mean(grad > EDGE_THRESHOLD))

    return np.array([lap_var, grad_mean, grad_std, hf_ratio, local_contrast,
                     edge_density, 1.0])


def train_ridge(X: np.ndarray, y: np.ndarray, lam: float, unpenalized=()) -> np.ndarray:
    """Closed-form ridge: w = (X'X + lam*D)^-1 X'y via a Cholesky solve,
    where D is the identity with zeros at `unpenalized` columns."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(~np.isfinite(X)) or np.any(~np.isfinite(y)):
        raise ScorerError("NaN or inf in ridge inputs")
    if lam < 0:
        raise ScorerError("lambda must be >= 0")
    d = X.shape[1]
    D = np.eye(d)
    for i in unpenalized:
        D[i, i] = 0.0
    A = X.T @ X + lam * D
    try:
        c, low = linalg.cho_factor(A)
        return linalg.cho_solve((c, low), X.T @ y)
    except linalg.LinAlgError as e:
        raise ScorerError(f"singular ridge system (lambda={lam}): {e}") from e


@dataclasses.dataclass(frozen=True)
class ScorerModel:
    weights: tuple        # one weight per kept feature, bias last
    feature_means: tuple  # over the 6 non-bias features
    feature_stds: tuple
    dropped: tuple        # indices of zero-variance features, removed from X
    lam: float
    blur_type: str
    manifest_fingerprint: str

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, indent=1) + "\n"

    @staticmethod
    def from_json(text: str) -> "ScorerModel":
        d = json.loads(text)
        return ScorerModel(
            weights=tuple(d["weights"]),
            feature_means=tuple(d["feature_means"]),
            feature_stds=tuple(d["feature_stds"]),
            dropped=tuple(d["dropped"]),
            lam=d["lam"],
            blur_type=d["blur_type"],
            manifest_fingerprint=d["manifest_fingerprint"],
        )


def save_model(model: ScorerModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model.to_json())


def load_model(path) -> ScorerModel:
    with open(path, encoding="utf-8") as fh:
        return ScorerModel.from_json(fh.read())


def _manifest_fingerprint(m: Manifest) -> str:
    h = hashlib.sha256()
    for s in m.samples:
        h.update(f"{s.image_path}|{s.level}|{s.score}\n".encode())
    return h.hexdigest()


def _design_matrix(feats: np.ndarray, means, stds, dropped):
    cols = []
    for i in range(FEATURE_DIM - 1):
        if i in dropped:
            continue
        cols.append((feats[:, i] - means[i]) / stds[i])
    cols.append(feats[:, BIAS_INDEX])
    return np.stack(cols, axis=1)


def fit_scorer(train: Manifest, lam: float) -> ScorerModel:
    """Standardize features on the training set and solve the ridge system;
    the bias column is neither standardized nor penalized."""
    if len(train) == 0:
        raise ScorerError("empty training manifest")
    y = np.array([s.score for s in train.samples], dtype=np.float64)
    if np.ptp(y) == 0.0:
        raise ScorerError("degenerate manifest: all scores equal")
    feats = np.stack([blur_features(load_image(s.image_path)) for s in train.samples])
    means = feats[:, :BIAS_INDEX].mean(axis=0)
    stds = feats[:, :BIAS_INDEX].std(axis=0)
    dropped = tuple(int(i) for i in np.flatnonzero(stds == 0.0))
    X = _design_matrix(feats, means, stds, dropped)
    w = train_ridge(X, y, lam, unpenalized=(X.shape[1] - 1,))
    return ScorerModel(
        weights=tuple(float(v) for v in w),
        feature_means=tuple(float(v) for v in means),
        feature_stds=tuple(float(v) for v in stds),
        dropped=dropped,
        lam=float(lam),
        blur_type=train.blur_type,
        manifest_fingerprint=_manifest_fingerprint(train),
    )


def predict_score(model: ScorerModel, gray: Raster) -> float:
    feats = blur_features(gray)[None, :]
    X = _design_matrix(feats, model.feature_means, model.feature_stds, set(model.dropped))
    raw = float(X[0] @ np.asarray(model.weights))
    return min(max(raw, 0.0), 10.0)


@dataclasses.dataclass(frozen=True)
class ScorerEvaluation:
    mae: float
    spearman: float
    ordering_accuracy: float
    degenerate: bool


def evaluate_scorer(model: ScorerModel, test: Manifest) -> ScorerEvaluation:
    """MAE, Spearman rank correlation, and same-source pairwise ordering
    accuracy of the predictions against the true blur scores."""
    if len(test) == 0:
        raise ScorerError("empty test manifest")
    preds = []
    for s in test.samples:
        preds.append(predict_score(model, load_image(s.image_path)))
    preds = np.array(preds)
    truth = np.array([s.score for s in test.samples])
    mae = float(np.mean(np.abs(preds - truth)))

    degenerate = np.ptp(preds) == 0.0 or np.ptp(truth) == 0.0
    if degenerate:
        rho = 0.0
    else:
        rho = float(stats.spearmanr(preds, truth).statistic)
        if math.isnan(rho):
            rho, degenerate = 0.0, True

    by_source: dict = {}
    for idx, s in enumerate(test.samples):
        by_source.setdefault(s.source_hr_path, []).append(idx)
    correct = 0
    total = 0
    for idxs in by_source.values():
        for i, j in combinations(idxs, 2):
            if truth[i] == truth[j]:
                continue
            total += 1
            if (preds[i] - preds[j]) * (truth[i] - truth[j]) > 0:
                correct += 1
    ordering = correct / total if total else 1.0
    return ScorerEvaluation(mae, rho, ordering, degenerate)
