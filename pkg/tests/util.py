"""Shared test helpers: synthetic frame/sequence construction."""

from __future__ import annotations

import numpy as np

from hvppnet.yuv import Yuv420Frame, write_yuv420


def random_frame(rng: np.random.Generator, width: int, height: int) -> Yuv420Frame:
    return Yuv420Frame(
        y=rng.integers(0, 256, size=(height, width), dtype=np.uint8),
        u=rng.integers(0, 256, size=(height // 2, width // 2), dtype=np.uint8),
        v=rng.integers(0, 256, size=(height // 2, width // 2), dtype=np.uint8),
    )


def smooth_frame(rng: np.random.Generator, width: int, height: int) -> Yuv420Frame:
    """Natural-ish content: smoothed noise with gradients, full 8-bit range."""

    def plane(h, w, lo=16, hi=235):
        base = rng.normal(0.0, 1.0, size=(h, w))
        # cheap separable box smoothing, three passes
        for _ in range(3):
            base = (np.roll(base, 1, 0) + base + np.roll(base, -1, 0)) / 3.0
            base = (np.roll(base, 1, 1) + base + np.roll(base, -1, 1)) / 3.0
        ramp = np.linspace(0.0, 1.0, w)[None, :] + np.linspace(0.0, 0.5, h)[:, None]
        v = base * 3.0 + ramp
        v = (v - v.min()) / (v.max() - v.min() + 1e-12)
        return (lo + v * (hi - lo)).round().clip(0, 255).astype(np.uint8)

    return Yuv420Frame(
        y=plane(height, width),
        u=plane(height // 2, width // 2, 64, 192),
        v=plane(height // 2, width // 2, 64, 192),
    )


def degrade_frame(frame: Yuv420Frame, rng: np.random.Generator, noise: float = 6.0) -> Yuv420Frame:
    """Compression-like degradation: light blur plus quantization-ish noise."""

    def degrade(plane: np.ndarray) -> np.ndarray:
        x = plane.astype(np.float64)
        blurred = (
            x
            + np.roll(x, 1, 0) + np.roll(x, -1, 0)
            + np.roll(x, 1, 1) + np.roll(x, -1, 1)
        ) / 5.0
        noisy = blurred + rng.normal(0.0, noise, size=x.shape)
        return np.clip(np.round(noisy), 0, 255).astype(np.uint8)

    return Yuv420Frame(degrade(frame.y), degrade(frame.u), degrade(frame.v))


def write_sequence(path, frames) -> None:
    for i, frame in enumerate(frames):
        write_yuv420(frame, path, append=i > 0)
