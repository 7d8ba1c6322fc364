import math

import numpy as np
import pytest

from histobench.metrics_fullref import (
    InstanceMask,
    MaskError,
    MetricError,
    embedding_cosine,
    glcm,
    intensity_features,
    l1_nuclear_metrics,
    load_mask,
    mse,
    psnr,
    save_mask,
    ssim,
    texture_features,
)
from histobench.raster import Raster

from conftest import (
    moments_oracle,
    mse_oracle,
    random_raster,
    ssim_oracle,
    tissue_like,
)


def const(value, w=16, h=16, c=1):
    return Raster(np.full((h, w, c), value, dtype=np.uint8))


def test_mse_basics():
    r = random_raster(0)
    assert mse(r, r) == 0.0
    assert mse(const(0), const(16)) == 256.0
    a, b = random_raster(1, 8, 8), random_raster(2, 8, 8)
    assert mse(a, b) == pytest.approx(mse_oracle(a, b), abs=0)
    assert mse(a, b) == mse(b, a)


def test_mse_dim_mismatch():
    with pytest.raises(MetricError):
        mse(random_raster(0, 8, 8), random_raster(0, 9, 8))


def test_psnr():
    r = random_raster(3)
    assert psnr(r, r) == math.inf
    assert psnr(const(0), const(16)) == pytest.approx(10 * math.log10(65025 / 256), abs=1e-9)


def test_ssim_identity_and_inversion():
    r = random_raster(4, 32, 32, channels=1)
    assert ssim(r, r) == pytest.approx(1.0, abs=1e-12)
    inv = Raster(255 - r.data)
    assert ssim(r, inv) < 1.0


@pytest.mark.parametrize("seed", range(3))
def test_ssim_matches_bruteforce(seed):
    from histobench.metrics_fullref import _ssim_window

    a = random_raster(seed, 32, 32, channels=1)
    b = random_raster(seed + 100, 32, 32, channels=1)
    x = a.data[:, :, 0].astype(float)
    y = b.data[:, :, 0].astype(float)
    assert ssim(a, b) == pytest.approx(ssim_oracle(x, y, _ssim_window()), abs=1e-6)


def test_ssim_too_small():
    with pytest.raises(MetricError):
        ssim(random_raster(0, 8, 8), random_raster(1, 8, 8))


def test_mask_roundtrip_and_census(tmp_path):
    labels = np.zeros((8, 8), dtype=np.int32)
    labels[1:3, 1:3] = 1
    labels[4:6, 4:6] = 5
    labels[0, 7] = 9
    m = InstanceMask(labels)
    p = tmp_path / "mask.png"
    save_mask(m, p)
    got = load_mask(p)
    assert got.instance_ids == [1, 5, 9]
    assert (got.labels == labels).all()


def test_mask_all_zero(tmp_path):
    save_mask(InstanceMask(np.zeros((4, 4), dtype=np.int32)), tmp_path / "z.png")
    assert load_mask(tmp_path / "z.png").instance_ids == []


def test_mask_rejects_8bit(tmp_path):
    from PIL import Image

    Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(tmp_path / "m8.png")
    with pytest.raises(MaskError):
        load_mask(tmp_path / "m8.png")


def region_mask(h, w, sel_value=1):
    labels = np.zeros((h, w), dtype=np.int32)
    labels[:] = sel_value
    return InstanceMask(labels)


def test_intensity_constant_region():
    g = const(100, 4, 4)
    assert intensity_features(g, region_mask(4, 4), 1) == (100.0, 0.0, 0.0, 0.0)


def test_intensity_two_point():
    data = np.array([[0, 255], [255, 0]], dtype=np.uint8)[:, :, None]
    feats = intensity_features(Raster(data), region_mask(2, 2), 1)
    assert feats[0] == pytest.approx(127.5, abs=1e-9)
    assert feats[1] == pytest.approx(127.5, abs=1e-9)
    assert feats[2] == pytest.approx(0.0, abs=1e-9)
    assert feats[3] == pytest.approx(-2.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_intensity_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    g = Raster(rng.integers(0, 256, (12, 12, 1), dtype=np.uint8))
    labels = (rng.random((12, 12)) < 0.4).astype(np.int32)
    if labels.sum() < 2:
        labels[0, 0] = labels[0, 1] = 1
    m = InstanceMask(labels)
    got = intensity_features(g, m, 1)
    want = moments_oracle(g.data[:, :, 0][labels == 1])
    for a, b in zip(got, want):
        assert a == pytest.approx(b, rel=1e-9, abs=1e-9)


def test_intensity_unknown_id():
    with pytest.raises(MaskError):
        intensity_features(const(1, 4, 4), region_mask(4, 4), 3)


def test_glcm_constant_region():
    p = glcm(const(100, 6, 6), region_mask(6, 6), 1)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    level = (100 * 32) // 256
    assert p[level, level] == pytest.approx(1.0, abs=1e-12)
    assert texture_features(p) == pytest.approx((0.0, 0.0, 1.0, 1.0), abs=1e-12)


def test_glcm_single_pixel_nucleus():
    labels = np.zeros((4, 4), dtype=np.int32)
    labels[2, 2] = 1
    with pytest.raises(MetricError):
        glcm(const(50, 4, 4), InstanceMask(labels), 1)


def test_glcm_checkerboard_offset_10():
    # gray 0 -> level 0, gray 8 -> level 1
    data = np.array([[0, 8], [8, 0]], dtype=np.uint8)[:, :, None]
    p = glcm(Raster(data), region_mask(2, 2), 1, offsets=((1, 0),))
    assert p[0, 1] == pytest.approx(0.5, abs=1e-12)
    assert p[1, 0] == pytest.approx(0.5, abs=1e-12)
    contrast, dissim, homog, energy = texture_features(p)
    assert contrast == pytest.approx(1.0, abs=1e-9)
    assert dissim == pytest.approx(1.0, abs=1e-9)
    assert homog == pytest.approx(0.5, abs=1e-9)
    assert energy == pytest.approx(math.sqrt(0.5), abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_glcm_sums_to_one(seed):
    img, mask = tissue_like(seed, size=64)
    for nid in mask.instance_ids:
        p = glcm(img, mask, nid)
        assert p.sum() == pytest.approx(1.0, abs=1e-9)


def test_texture_features_random_vs_double_sum():
    rng = np.random.default_rng(0)
    p = rng.random((32, 32))
    p /= p.sum()
    contrast = sum(
        p[i, j] * (i - j) ** 2 for i in range(32) for j in range(32)
    )
    dissim = sum(p[i, j] * abs(i - j) for i in range(32) for j in range(32))
    homog = sum(p[i, j] / (1 + (i - j) ** 2) for i in range(32) for j in range(32))
    energy = math.sqrt(sum(p[i, j] ** 2 for i in range(32) for j in range(32)))
    got = texture_features(p)
    assert got == pytest.approx((contrast, dissim, homog, energy), abs=1e-12)


def test_l1_identity():
    img, mask = tissue_like(1, size=64)
    res = l1_nuclear_metrics(img, img, mask)
    assert res.l1_texture == 0.0
    assert res.l1_intensity == 0.0
    assert res.nucleus_count > 0


def test_l1_constant_shift():
    g = np.full((10, 10, 1), 100, dtype=np.uint8)
    labels = np.zeros((10, 10), dtype=np.int32)
    labels[2:7, 2:7] = 1
    hr = Raster(g)
    sr = Raster(g + 10)
    res = l1_nuclear_metrics(hr, sr, InstanceMask(labels))
    assert res.l1_intensity == pytest.approx(10.0, abs=1e-9)
    assert res.l1_texture == pytest.approx(0.0, abs=1e-9)


def test_l1_empty_result():
    labels = np.zeros((8, 8), dtype=np.int32)
    labels[3, 3] = 1  # single pixel: no co-occurring pairs
    res = l1_nuclear_metrics(const(5, 8, 8), const(5, 8, 8), InstanceMask(labels))
    assert res.empty
    assert res.l1_texture is None and res.l1_intensity is None
    assert res.skipped == 1


def test_l1_monotone_in_blur():
    from histobench.degrade import convolve, gaussian_kernel_for_sigma

    img, mask = tissue_like(2, size=96, n_nuclei=8)
    vals = []
    for sigma in (0.5, 1.0, 2.0, 4.0):
        blurred = convolve(img, gaussian_kernel_for_sigma(sigma))
        vals.append(l1_nuclear_metrics(img, blurred, mask).l1_texture)
    for a, b in zip(vals, vals[1:]):
        assert b >= a


def test_embedding_cosine():
    assert embedding_cosine([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert embedding_cosine([1, 0], [0, 1]) == pytest.approx(0.0)
    with pytest.raises(MetricError):
        embedding_cosine([0, 0], [1, 1])
    with pytest.raises(MetricError):
        embedding_cosine([1, 2], [1, 2, 3])
