"""Deterministic diffusion-timestep math: noise schedules, spaced DDPM
reverse sampling with a pluggable noise predictor, an analytic conjugate
Gaussian denoiser for validation, and the color-fix post-process."""

from __future__ import annotations

import dataclasses
import json
from typing import Callable

import numpy as np

from .raster import Raster

DEFAULT_T = 1000
DEFAULT_BETA_START = 0.00085
DEFAULT_BETA_END = 0.012

# Denoiser: (x_t, parent timestep t, condition) -> predicted noise, same shape.
Denoiser = Callable[[np.ndarray, int, object], np.ndarray]


class ScheduleError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if b.ndim != 1 or b.size < 1:
            raise ScheduleError("betas must be a nonempty 1-D array")
        if np.any(b <= 0.0) or np.any(b >= 1.0):
            raise ScheduleError("betas must lie in (0, 1)")
        object.__setattr__(self, "betas", b)

    @property
    def T(self) -> int:
        return self.betas.size

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alphabars(self) -> np.ndarray:
        return np.cumprod(self.alphas)


def linear_schedule(T: int = DEFAULT_T, beta_start: float = DEFAULT_BETA_START,
                    beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    if T < 1:
        raise ScheduleError("T must be >= 1")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ScheduleError("need 0 < beta_start <= beta_end < 1")
    if T == 1:
        return NoiseSchedule(np.array([beta_start]))
    return NoiseSchedule(np.linspace(beta_start, beta_end, T))


@dataclasses.dataclass(frozen=True)
class SpacedSchedule:
    parent: NoiseSchedule
    indices: np.ndarray  # selected parent timesteps, strictly increasing
    betas: np.ndarray    # respaced betas, one per selected index

    @property
    def n(self) -> int:
        return self.indices.size

    @property
    def alphabars(self) -> np.ndarray:
        return np.cumprod(1.0 - self.betas)


def space_schedule(s: NoiseSchedule, n: int) -> SpacedSchedule:
    """Uniform-stride respacing: indices floor(i*T/n); betas recomputed so the
    respaced running product matches the parent alphabar at each index."""
    if not 1 <= n <= s.T:
        raise ScheduleError(f"n must be in [1, {s.T}]")
    idx = np.unique((np.arange(n) * s.T) // n)
    ab = s.alphabars[idx]
    prev = np.concatenate([[1.0], ab[:-1]])
    betas = 1.0 - ab / prev
    return SpacedSchedule(parent=s, indices=idx, betas=betas)


def q_sample(x0: np.ndarray, t: int, eps: np.ndarray, s: NoiseSchedule) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ScheduleError("x0 and eps shapes differ")
    if not 0 <= t < s.T:
        raise ScheduleError(f"t out of range [0, {s.T})")
    ab = s.alphabars[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


VARIANCE_TYPES = ("fixed_large", "fixed_small")


def ddpm_step(x_t: np.ndarray, i: int, eps_hat: np.ndarray, sp: SpacedSchedule,
              rng: np.random.Generator, variance: str = "fixed_large") -> np.ndarray:
    """One reverse step on the spaced chain; no noise is added at i == 0.

    fixed_large uses beta' as the step variance, fixed_small the posterior
    beta-tilde. With coarse spacing fixed_small visibly under-disperses the
    sampled distribution, so fixed_large is the default.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if x_t.shape != eps_hat.shape:
        raise ScheduleError("x_t and eps_hat shapes differ")
    if not 0 <= i < sp.n:
        raise ScheduleError("spaced index out of range")
    if variance not in VARIANCE_TYPES:
        raise ScheduleError(f"variance must be one of {VARIANCE_TYPES}")
    beta = sp.betas[i]
    alpha = 1.0 - beta
    ab = sp.alphabars[i]
    mu = (x_t - beta / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(alpha)
    if i == 0:
        return mu
    if variance == "fixed_large":
        var = beta
    else:
        ab_prev = sp.alphabars[i - 1]
        var = beta * (1.0 - ab_prev) / (1.0 - ab)
    return mu + np.sqrt(var) * rng.standard_normal(x_t.shape)


def sample(denoiser: Denoiser, condition, shape, sp: SpacedSchedule, seed: int,
           variance: str = "fixed_large") -> np.ndarray:
    """Full reverse pass: seeded standard-normal start, then ddpm_step from the
    last spaced index down to 0."""
    rng = np.random.default_rng(np.random.Philox(key=seed))
    x = rng.standard_normal(shape)
    for i in range(sp.n - 1, -1, -1):
        t = int(sp.indices[i])
        eps_hat = denoiser(x, t, condition)
        if np.asarray(eps_hat).shape != x.shape:
            raise ScheduleError("denoiser changed the state shape")
        x = ddpm_step(x, i, eps_hat, sp, rng, variance)
    return x


def analytic_gaussian_denoiser(mu0, var0, schedule: NoiseSchedule) -> Denoiser:
    """Exact noise predictor when x0 ~ N(mu0, var0) elementwise.

    With x_t = sqrt(ab) x0 + sqrt(1-ab) eps, the posterior mean of x0 given
    x_t is the precision-weighted combination of the prior mean and the
    observation x_t / sqrt(ab); the implied noise estimate is
    (x_t - sqrt(ab) E[x0|x_t]) / sqrt(1-ab).
    """
    mu0 = np.asarray(mu0, dtype=np.float64)
    var0 = np.asarray(var0, dtype=np.float64)
    if np.any(var0 <= 0.0):
        raise ScheduleError("var0 must be positive")
    alphabars = schedule.alphabars

    def denoiser(x_t: np.ndarray, t: int, condition=None) -> np.ndarray:
        ab = alphabars[t]
        precision = 1.0 / var0 + ab / (1.0 - ab)
        post_mean = (mu0 / var0 + np.sqrt(ab) * x_t / (1.0 - ab)) / precision
        return (x_t - np.sqrt(ab) * post_mean) / np.sqrt(1.0 - ab)

    return denoiser


def color_fix(sample_img: Raster, reference: Raster) -> Raster:
    """Match each output channel's mean/std to the reference's, in float."""
    if (sample_img.width, sample_img.height, sample_img.channels) != (
        reference.width, reference.height, reference.channels,
    ):
        raise ScheduleError("sample and reference dims differ")
    s = sample_img.to_float()
    r = reference.to_float()
    out = np.empty_like(s)
    for c in range(s.shape[2]):
        sm, ss = s[:, :, c].mean(), s[:, :, c].std()
        rm, rs = r[:, :, c].mean(), r[:, :, c].std()
        if rs == 0.0 or ss == 0.0:
            out[:, :, c] = rm
        else:
            out[:, :, c] = (s[:, :, c] - sm) / ss * rs + rm
    return Raster.from_float(out)


def schedule_dump(sp: SpacedSchedule) -> str:
    """JSON dump of the schedule for cross-implementation comparison."""
    payload = {
        "T": sp.parent.T,
        "betas": sp.parent.betas.tolist(),
        "alphabars": sp.parent.alphabars.tolist(),
        "spaced_indices": sp.indices.tolist(),
        "spaced_betas": sp.betas.tolist(),
    }
    return json.dumps(payload, sort_keys=True) + "\n"


def schedule_verify(text: str, tol: float = 1e-12) -> bool:
    """Check a dumped schedule's internal consistency."""
    d = json.loads(text)
    sched = NoiseSchedule(np.array(d["betas"]))
    if not np.allclose(sched.alphabars, d["alphabars"], rtol=0, atol=tol):
        return False
    idx = np.asarray(d["spaced_indices"])
    respaced = np.cumprod(1.0 - np.asarray(d["spaced_betas"]))
    return bool(np.all(np.abs(respaced - sched.alphabars[idx]) <= tol))
