"""Independent re-implementations of the quality metrics, written directly
from their definitions with explicit per-window arithmetic. These share only
the published constants with the library path, never its code."""

from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import PchipInterpolator

WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WIN = 11
SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _kernel():
    g = np.array([math.exp(-((i - (WIN - 1) / 2) ** 2) / (2 * SIGMA**2)) for i in range(WIN)])
    g /= g.sum()
    return np.outer(g, g)


def msssim_reference(ref: np.ndarray, test: np.ndarray, peak: float = 255.0) -> float:
    """Direct-formula MS-SSIM: per-window two-pass moments, explicit loops."""
    a = ref.astype(np.float64)
    b = test.astype(np.float64)
    min_dim = min(a.shape)
    scales = min(len(WEIGHTS), int(math.floor(math.log2(min_dim / WIN))) + 1)
    weights = [w / sum(WEIGHTS[:scales]) for w in WEIGHTS[:scales]]
    c1 = (K1 * peak) ** 2
    c2 = (K2 * peak) ** 2
    kern = _kernel()

    total = 1.0
    for level in range(scales):
        h, w = a.shape
        lum_cs_vals = []
        cs_vals = []
        for y in range(h - WIN + 1):
            for x in range(w - WIN + 1):
                wa = a[y : y + WIN, x : x + WIN]
                wb = b[y : y + WIN, x : x + WIN]
                mu_a = float((kern * wa).sum())
                mu_b = float((kern * wb).sum())
                var_a = float((kern * (wa - mu_a) ** 2).sum())
                var_b = float((kern * (wb - mu_b) ** 2).sum())
                cov = float((kern * (wa - mu_a) * (wb - mu_b)).sum())
                lum = (2 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1)
                cs = (2 * cov + c2) / (var_a + var_b + c2)
                lum_cs_vals.append(lum * cs)
                cs_vals.append(cs)
        if level < scales - 1:
            total *= max(np.mean(cs_vals), np.finfo(np.float64).eps) ** weights[level]
            # dyadic downsample: 2x2 block means, trailing odd row/col dropped
            a2 = np.empty((h // 2, w // 2))
            b2 = np.empty((h // 2, w // 2))
            for y in range(h // 2):
                for x in range(w // 2):
                    a2[y, x] = a[2 * y : 2 * y + 2, 2 * x : 2 * x + 2].mean()
                    b2[y, x] = b[2 * y : 2 * y + 2, 2 * x : 2 * x + 2].mean()
            a, b = a2, b2
        else:
            total *= max(np.mean(lum_cs_vals), np.finfo(np.float64).eps) ** weights[level]
    return float(total)


def bd_rate_dense(anchor_rates, anchor_quals, test_rates, test_quals, n=10_000) -> float:
    """PCHIP interpolants integrated by an n-point trapezoid rule."""
    lo = max(min(anchor_quals), min(test_quals))
    hi = min(max(anchor_quals), max(test_quals))
    f_anchor = PchipInterpolator(anchor_quals, np.log10(anchor_rates))
    f_test = PchipInterpolator(test_quals, np.log10(test_rates))
    grid = np.linspace(lo, hi, n)
    diff = f_test(grid) - f_anchor(grid)
    avg = np.trapezoid(diff, grid) / (hi - lo)
    return float((10.0**avg - 1.0) * 100.0)
