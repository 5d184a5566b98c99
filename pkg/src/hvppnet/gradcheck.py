"""Finite-difference verification of reverse-mode gradients.

``grad_check`` compares the analytic gradient of a scalar-valued function
with central differences, coordinate by coordinate, and reports the largest
relative error per tensor. Step sizes default to 1e-3 in single precision
and 1e-5 in double precision; the relative error uses a small denominator
floor so near-zero gradients are judged on an absolute scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch

__all__ = ["GradCheckEntry", "GradCheckReport", "grad_check"]

DENOM_FLOOR = 0.1


@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    coords_checked: int


@dataclass
class GradCheckReport:
    entries: list[GradCheckEntry]
    tolerance: float
    step: float

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def failures(self) -> list[GradCheckEntry]:
        return [e for e in self.entries if e.max_rel_err >= self.tolerance]

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"grad check {status}: max relative error {self.max_rel_err:.3e} "
            f"(tolerance {self.tolerance:.1e}, h={self.step:.1e}, "
            f"{len(self.entries)} tensors)"
        )


def grad_check(
    fn: Callable[[], torch.Tensor],
    tensors: dict[str, torch.Tensor],
    h: float | None = None,
    tolerance: float | None = None,
    samples_per_tensor: int = 8,
    seed: int = 0,
) -> GradCheckReport:
    """Check autograd gradients of ``fn`` against central differences.

    ``fn`` takes no arguments, closes over ``tensors``, and returns a scalar.
    Every tensor is checked; tensors with more than ``samples_per_tensor``
    elements are probed at that many seeded random coordinates, smaller ones
    exhaustively. Tensors must be leaves with requires_grad set.
    """
    if not tensors:
        raise ValueError("no tensors to check")
    dtype = next(iter(tensors.values())).dtype
    double = dtype == torch.float64
    if h is None:
        h = 1e-5 if double else 1e-3
    if tolerance is None:
        tolerance = 1e-5 if double else 1e-3

    loss = fn()
    if loss.numel() != 1:
        raise ValueError(f"fn must return a scalar, got shape {tuple(loss.shape)}")
    analytic = torch.autograd.grad(loss, list(tensors.values()), allow_unused=False)

    rng = np.random.default_rng(seed)
    entries: list[GradCheckEntry] = []
    for (name, tensor), grad in zip(tensors.items(), analytic):
        n = tensor.numel()
        if n <= samples_per_tensor:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=samples_per_tensor, replace=False)
        flat = tensor.detach().view(-1)
        grad_flat = grad.detach().view(-1)
        worst = 0.0
        with torch.no_grad():
            for idx in coords:
                idx = int(idx)
                orig = flat[idx].item()
                flat[idx] = orig + h
                f_plus = float(fn())
                flat[idx] = orig - h
                f_minus = float(fn())
                flat[idx] = orig
                fd = (f_plus - f_minus) / (2.0 * h)
                a = float(grad_flat[idx])
                rel = abs(a - fd) / max(abs(a), abs(fd), DENOM_FLOOR)
                worst = max(worst, rel)
        entries.append(GradCheckEntry(name=name, max_rel_err=worst, coords_checked=len(coords)))
    return GradCheckReport(entries=entries, tolerance=tolerance, step=h)
