import math

import numpy as np
import pytest

from histobench import degrade
from histobench.degrade import (
    DegradeError,
    add_gaussian_noise,
    add_poisson_noise,
    apply_recipe,
    box_kernel,
    codeformer_recipe,
    convolve,
    gaussian_kernel,
    realesrgan_recipe,
    replay_trace,
)
from histobench.raster import Raster, resize_bicubic

from conftest import convolve_oracle, random_raster


def test_gaussian_kernel_symmetry():
    k = gaussian_kernel(1.5, 1.5, 0.0, 9)
    w = k.weights
    assert np.allclose(w, w[::-1, :]) and np.allclose(w, w[:, ::-1])
    assert np.allclose(w, w.T)
    assert w[4, 4] == w.max()


@pytest.mark.parametrize("params", [(0.3, 0.3, 0.0, 3), (2.0, 0.5, 1.1, 21), (3.0, 3.0, 0.4, 15)])
def test_kernel_normalized(params):
    assert abs(gaussian_kernel(*params).weights.sum() - 1.0) <= 1e-9


def test_gaussian_kernel_pi_periodic():
    a = gaussian_kernel(2.0, 0.5, math.pi / 4, 13)
    b = gaussian_kernel(2.0, 0.5, math.pi / 4 + math.pi, 13)
    assert np.allclose(a.weights, b.weights, atol=1e-12)


def test_gaussian_kernel_errors():
    with pytest.raises(DegradeError):
        gaussian_kernel(0.0, 1.0, 0.0, 5)
    with pytest.raises(DegradeError):
        gaussian_kernel(1.0, 1.0, 0.0, 4)


def test_box_kernel():
    assert box_kernel(0).weights.shape == (1, 1)
    assert np.allclose(box_kernel(1).weights, np.full((3, 3), 1 / 9))
    with pytest.raises(DegradeError):
        box_kernel(-1)


def test_convolve_identity_and_constant():
    r = random_raster(0, 8, 8)
    assert convolve(r, box_kernel(0)) == r
    const = Raster(np.full((8, 8, 3), 77, dtype=np.uint8))
    assert convolve(const, gaussian_kernel(2.0, 2.0, 0.0, 7)) == const


@pytest.mark.parametrize("seed", range(3))
def test_convolve_matches_bruteforce(seed):
    r = random_raster(seed, 8, 8, channels=1)
    k = gaussian_kernel(1.0, 0.6, 0.3, 3)
    fast = convolve(r, k)
    slow = Raster.from_float(convolve_oracle(r.to_float()[:, :, 0], k.weights)[:, :, None])
    assert np.abs(fast.data.astype(int) - slow.data.astype(int)).max() <= 1


def test_gaussian_noise_zero_sigma_and_determinism():
    r = random_raster(1, 16, 16)
    assert add_gaussian_noise(r, 0.0, 7) == r
    assert add_gaussian_noise(r, 0.1, 7) == add_gaussian_noise(r, 0.1, 7)
    assert add_gaussian_noise(r, 0.1, 7) != add_gaussian_noise(r, 0.1, 8)


def test_gaussian_noise_std():
    mid = Raster(np.full((256, 256, 1), 128, dtype=np.uint8))
    out = add_gaussian_noise(mid, 0.1, 3)
    diff = out.to_float() - mid.to_float()
    assert abs(diff.std() - 0.1) <= 0.005


def test_poisson_noise():
    zero = Raster(np.zeros((16, 16, 1), dtype=np.uint8))
    assert add_poisson_noise(zero, 100.0, 1) == zero
    r = random_raster(2, 32, 32)
    assert add_poisson_noise(r, 50.0, 5) == add_poisson_noise(r, 50.0, 5)
    huge = add_poisson_noise(r, 1e6, 5)
    assert np.abs(huge.data.astype(int) - r.data.astype(int)).max() <= 2


def test_blur_reduces_laplacian_variance():
    from histobench.metrics_noref import blur_features

    r, _ = __import__("conftest").tissue_like(5, size=64)
    from histobench.raster import to_grayscale

    g = to_grayscale(r)
    lv = [blur_features(convolve(g, gaussian_kernel(s, s, 0, 13)))[0] for s in (0.5, 1.0, 2.0)]
    assert lv[0] > lv[1] > lv[2]


def test_recipe_structure():
    assert realesrgan_recipe().repeat_count == 2
    assert codeformer_recipe().repeat_count == 1
    kinds = [s.kind for s in realesrgan_recipe().stages]
    assert kinds == ["blur", "resize", "gaussian_noise", "jpeg"]
    kinds = [s.kind for s in codeformer_recipe().stages]
    assert kinds == ["blur", "resize", "gaussian_noise", "jpeg", "resize_back"]


@pytest.mark.parametrize("recipe_fn", [realesrgan_recipe, codeformer_recipe])
def test_recipe_final_scale(recipe_fn):
    hr = random_raster(3, 64, 64)
    pair = apply_recipe(hr, recipe_fn(), 4, seed=11)
    assert (pair.lr.width, pair.lr.height) == (16, 16)


def test_recipe_paper_dims():
    hr, _ = __import__("conftest").tissue_like(0, size=512, n_nuclei=10)
    pair = apply_recipe(hr, realesrgan_recipe(), 4, seed=0)
    assert (pair.lr.width, pair.lr.height) == (128, 128)


def test_degenerate_recipe_is_resize_only():
    hr = random_raster(4, 32, 32)
    recipe = degrade.DegradationRecipe(
        (
            degrade.Stage("blur_box", {"radius": 0}),
            degrade.Stage("gaussian_noise", {"sigma_range": [0.0, 0.0], "poisson_prob": 0.0}),
        ),
        repeat_count=1,
    )
    pair = apply_recipe(hr, recipe, 2, seed=5)
    assert pair.lr == resize_bicubic(hr, 16, 16)


def test_replay_trace_bit_identical():
    hr = random_raster(6, 32, 32)
    pair = apply_recipe(hr, realesrgan_recipe(), 2, seed=9)
    assert replay_trace(hr, pair.recipe_trace) == pair.lr


def test_apply_recipe_deterministic():
    hr = random_raster(7, 32, 32)
    a = apply_recipe(hr, realesrgan_recipe(), 2, seed=42)
    b = apply_recipe(hr, realesrgan_recipe(), 2, seed=42)
    assert a.lr == b.lr and a.recipe_trace == b.recipe_trace


def test_apply_recipe_dim_check():
    with pytest.raises(DegradeError):
        apply_recipe(random_raster(0, 30, 30), realesrgan_recipe(), 4, seed=0)


def test_recipe_json_roundtrip(tmp_path):
    r = realesrgan_recipe()
    text = r.to_json()
    assert degrade.DegradationRecipe.from_json(text) == r


def test_trace_serialization(tmp_path):
    hr = random_raster(8, 16, 16)
    pair = apply_recipe(hr, codeformer_recipe(), 2, seed=3)
    p = tmp_path / "x.trace.json"
    degrade.save_trace(pair.recipe_trace, p)
    assert degrade.load_trace(p) == pair.recipe_trace
