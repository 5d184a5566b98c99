"""Quality metrics and the Bjontegaard delta-rate calculator.

PSNR works on integer-domain planes (peak 255) with the MSE in double
precision. MS-SSIM follows the standard multi-scale definition: an 11x11
Gaussian window (sigma 1.5), k1=0.01/k2=0.03, contrast/structure terms at
every scale and the luminance term at the coarsest, exponent weights
(0.0448, 0.2856, 0.3001, 0.2363, 0.1333), and dyadic downsampling by 2x2
mean. Planes smaller than 176 px reduce the scale count and renormalize the
exponents.

BD-rate interpolates log10(rate) against quality with a monotone piecewise
cubic (PCHIP), integrates the difference over the overlapping quality range,
and reports (10^avg - 1) * 100; negative percentages are bitrate savings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.signal import correlate2d

__all__ = [
    "psnr",
    "ms_ssim",
    "msssim_to_db",
    "RdPoint",
    "RdCurve",
    "bd_rate",
]

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MSSSIM_WINDOW = 11
MSSSIM_SIGMA = 1.5
MSSSIM_K1 = 0.01
MSSSIM_K2 = 0.03


def psnr(ref: np.ndarray, test: np.ndarray, peak: float = 255.0) -> float:
    """10*log10(peak^2 / MSE); +inf when the planes are identical."""
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    diff = ref.astype(np.float64) - test.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_kernel(size: int = MSSSIM_WINDOW, sigma: float = MSSSIM_SIGMA) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_terms(a: np.ndarray, b: np.ndarray, kernel: np.ndarray, peak: float) -> tuple[float, float]:
    """Mean luminance*cs and mean cs over all valid window positions."""
    c1 = (MSSSIM_K1 * peak) ** 2
    c2 = (MSSSIM_K2 * peak) ** 2
    mu_a = correlate2d(a, kernel, mode="valid")
    mu_b = correlate2d(b, kernel, mode="valid")
    var_a = correlate2d(a * a, kernel, mode="valid") - mu_a * mu_a
    var_b = correlate2d(b * b, kernel, mode="valid") - mu_b * mu_b
    cov = correlate2d(a * b, kernel, mode="valid") - mu_a * mu_b
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def _downsample_2x2(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    x = x[: h - h % 2, : w - w % 2]
    return x.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def ms_ssim(ref: np.ndarray, test: np.ndarray, peak: float = 255.0) -> float:
    """Multi-scale structural similarity in (0, 1]; 1.0 iff planes identical.

    Five scales need min(W, H) >= 176; smaller planes use as many scales as
    fit an 11x11 window after dyadic downsampling, with the exponent weights
    renormalized over the scales kept.
    """
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    a = ref.astype(np.float64)
    b = test.astype(np.float64)
    min_dim = min(a.shape)
    if min_dim < MSSSIM_WINDOW:
        raise ValueError(f"plane too small for an {MSSSIM_WINDOW}x{MSSSIM_WINDOW} window: {a.shape}")
    scales = min(len(MSSSIM_WEIGHTS), int(math.floor(math.log2(min_dim / MSSSIM_WINDOW))) + 1)
    weights = np.asarray(MSSSIM_WEIGHTS[:scales], dtype=np.float64)
    weights = weights / weights.sum()

    kernel = _gaussian_kernel()
    # anti-correlated content can push a term mean negative; floor it at
    # machine epsilon so the product stays in (0, 1]
    floor = float(np.finfo(np.float64).eps)
    value = 1.0
    for level in range(scales):
        ssim_mean, cs_mean = _ssim_terms(a, b, kernel, peak)
        if level < scales - 1:
            value *= max(cs_mean, floor) ** weights[level]
            a = _downsample_2x2(a)
            b = _downsample_2x2(b)
        else:
            value *= max(ssim_mean, floor) ** weights[level]
    return float(value)


def msssim_to_db(value: float) -> float:
    """Map MS-SSIM m to -10*log10(1 - m) dB for rate-distortion fitting."""
    if not (0.0 <= value < 1.0):
        raise ValueError(f"MS-SSIM value must lie in [0, 1) for dB conversion, got {value}")
    return -10.0 * math.log10(1.0 - value)


@dataclass(frozen=True)
class RdPoint:
    """One rate-distortion sample: bitrate in kbps, quality in dB."""

    bitrate: float
    quality: float


@dataclass
class RdCurve:
    """Ordered rate-distortion samples; at least 4, strictly increasing."""

    points: list[RdPoint]
    label: str = ""

    def __post_init__(self):
        if len(self.points) < 4:
            raise ValueError(f"need at least 4 points for cubic fitting, got {len(self.points)}")
        for p in self.points:
            if not (p.bitrate > 0):
                raise ValueError(f"bitrate must be positive, got {p.bitrate}")
            if not math.isfinite(p.quality):
                raise ValueError(f"quality must be finite, got {p.quality}")
        rates = [p.bitrate for p in self.points]
        quals = [p.quality for p in self.points]
        if any(b >= a for a, b in zip(rates[1:], rates)) or any(
            b >= a for a, b in zip(quals[1:], quals)
        ):
            raise ValueError("points must be strictly increasing in bitrate and quality")

    @property
    def bitrates(self) -> np.ndarray:
        return np.asarray([p.bitrate for p in self.points], dtype=np.float64)

    @property
    def qualities(self) -> np.ndarray:
        return np.asarray([p.quality for p in self.points], dtype=np.float64)


def bd_rate(anchor: RdCurve, test: RdCurve) -> float:
    """Average bitrate change of ``test`` against ``anchor`` at equal quality.

    Fits log10(rate) as a monotone piecewise-cubic function of quality for
    both curves, integrates the difference over the overlapping quality
    interval, and returns (10^avg - 1) * 100. Negative means the test curve
    needs less rate for the same quality.
    """
    lo = max(anchor.qualities.min(), test.qualities.min())
    hi = min(anchor.qualities.max(), test.qualities.max())
    if not lo < hi:
        raise ValueError(
            f"no overlapping quality range: anchor spans "
            f"[{anchor.qualities.min():.4f}, {anchor.qualities.max():.4f}], test spans "
            f"[{test.qualities.min():.4f}, {test.qualities.max():.4f}]"
        )
    interp_anchor = PchipInterpolator(anchor.qualities, np.log10(anchor.bitrates))
    interp_test = PchipInterpolator(test.qualities, np.log10(test.bitrates))
    avg_diff = (interp_test.integrate(lo, hi) - interp_anchor.integrate(lo, hi)) / (hi - lo)
    return float((10.0**avg_diff - 1.0) * 100.0)
