import math

import numpy as np
import pytest

from histobench.metrics_fullref import InstanceMask
from histobench.raster import Raster


def random_raster(seed, w=16, h=16, channels=3):
    rng = np.random.default_rng(seed)
    return Raster(rng.integers(0, 256, (h, w, channels), dtype=np.uint8))


def tissue_like(seed, size=96, n_nuclei=8):
    """Synthetic H&E-ish patch: pink textured background with darker
    textured elliptical nuclei; returns (rgb Raster, InstanceMask)."""
    rng = np.random.default_rng(seed)
    img = np.empty((size, size, 3))
    base = np.array([230.0, 180.0, 200.0])
    img[:] = base + rng.normal(0, 12, (size, size, 3))
    labels = np.zeros((size, size), dtype=np.int32)
    yy, xx = np.mgrid[0:size, 0:size]
    placed = 0
    attempts = 0
    while placed < n_nuclei and attempts < 200:
        attempts += 1
        cy, cx = rng.uniform(10, size - 10, 2)
        ry, rx = rng.uniform(4, 8, 2)
        inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        if (labels[inside] != 0).any() or inside.sum() < 12:
            continue
        placed += 1
        labels[inside] = placed
        tint = np.array([120.0, 80.0, 160.0]) + rng.normal(0, 10, 3)
        tex = rng.normal(0, 25, (size, size))
        for c in range(3):
            img[:, :, c][inside] = tint[c] + tex[inside]
    arr = np.clip(np.round(img), 0, 255).astype(np.uint8)
    return Raster(arr), InstanceMask(labels)


# ----------------------------------------------------------------------------
# Independent brute-force oracles


def reflect101(i, n):
    # reflect-101: d c b | a b c d | c b a
    while i < 0 or i >= n:
        if i < 0:
            i = -i
        if i >= n:
            i = 2 * n - 2 - i
    return i


def convolve_oracle(img, weights):
    """Nested-loop correlation with reflect-101 borders on a float array."""
    h, w = img.shape
    k = weights.shape[0]
    half = k // 2
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-half, half + 1):
                for dx in range(-half, half + 1):
                    acc += weights[dy + half, dx + half] * img[
                        reflect101(y + dy, h), reflect101(x + dx, w)
                    ]
            out[y, x] = acc
    return out


def catmull_rom_w(t):
    a = -0.5
    t = abs(t)
    if t <= 1:
        return (a + 2) * t**3 - (a + 3) * t**2 + 1
    if t < 2:
        return a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a
    return 0.0


def bicubic_oracle(r: Raster, out_w, out_h) -> Raster:
    """Direct (non-separable) 4x4-tap evaluation of the Catmull-Rom resampler
    with clamp-to-edge, quantized once at the end."""
    f = r.to_float()
    h, w, c = f.shape
    out = np.zeros((out_h, out_w, c))
    for oy in range(out_h):
        sy = (oy + 0.5) * h / out_h - 0.5
        by = math.floor(sy)
        for ox in range(out_w):
            sx = (ox + 0.5) * w / out_w - 0.5
            bx = math.floor(sx)
            acc = np.zeros(c)
            wsum = 0.0
            for dy in range(-1, 3):
                wy = catmull_rom_w(sy - (by + dy))
                iy = min(max(by + dy, 0), h - 1)
                for dx in range(-1, 3):
                    wx = catmull_rom_w(sx - (bx + dx))
                    ix = min(max(bx + dx, 0), w - 1)
                    acc += wy * wx * f[iy, ix]
                    wsum += wy * wx
            out[oy, ox] = acc / wsum
    return Raster.from_float(out)


def mse_oracle(a: Raster, b: Raster) -> float:
    total = 0.0
    n = 0
    for y in range(a.height):
        for x in range(a.width):
            for c in range(a.channels):
                d = float(a.data[y, x, c]) - float(b.data[y, x, c])
                total += d * d
                n += 1
    return total / n


def ssim_oracle(x, y, window):
    """Per-window loop over valid positions on float grayscale arrays."""
    k = window.shape[0]
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    vals = []
    for i in range(x.shape[0] - k + 1):
        for j in range(x.shape[1] - k + 1):
            px = x[i : i + k, j : j + k]
            py = y[i : i + k, j : j + k]
            mx = (window * px).sum()
            my = (window * py).sum()
            vx = (window * px * px).sum() - mx * mx
            vy = (window * py * py).sum() - my * my
            vxy = (window * px * py).sum() - mx * my
            vals.append(
                ((2 * mx * my + c1) * (2 * vxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2))
            )
    return float(np.mean(vals))


def moments_oracle(values):
    vals = [float(v) for v in values]
    n = len(vals)
    mean = sum(vals) / n
    m2 = sum((v - mean) ** 2 for v in vals) / n
    if m2 == 0:
        return (mean, 0.0, 0.0, 0.0)
    m3 = sum((v - mean) ** 3 for v in vals) / n
    m4 = sum((v - mean) ** 4 for v in vals) / n
    return (mean, math.sqrt(m2), m3 / m2**1.5, m4 / m2**2 - 3.0)


def ridge_gd_oracle(X, y, lam, unpenalized=(), iters=200000, lr=None):
    """Plain gradient descent on the ridge objective, run to convergence."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    d = X.shape[1]
    pen = np.ones(d)
    for i in unpenalized:
        pen[i] = 0.0
    H = 2 * (X.T @ X + lam * np.diag(pen))
    if lr is None:
        lr = 1.0 / np.linalg.eigvalsh(H).max()
    w = np.zeros(d)
    for _ in range(iters):
        grad = 2 * (X.T @ (X @ w - y) + lam * pen * w)
        w_new = w - lr * grad
        if np.max(np.abs(w_new - w)) < 1e-13:
            return w_new
        w = w_new
    return w
