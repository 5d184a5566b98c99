"""Charbonnier losses, the scheduled Adam optimizer, and the seeded
training loop.

The loss is a smooth L1 surrogate sqrt(d^2 + eps^2) averaged over elements,
combined across components with fixed 10:1:1 Y/U/V weights. The learning
rate starts at lr0 and halves after every ``halve_every`` completed steps.
Training is bit-reproducible given the seed in deterministic mode (single
worker, fixed thread count).
"""

from __future__ import annotations

import csv
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .model import HVPPNet, ModelConfig, ParameterStore, save_checkpoint
from .yuv import TrainingPair, make_qp_plane, read_train_manifest, sample_patch_pair

__all__ = [
    "TrainConfig",
    "TrainState",
    "charbonnier",
    "weighted_yuv_loss",
    "scheduled_lr",
    "adam_step",
    "train",
    "parse_config_file",
]

LOSS_LOG_HEADER = ["step", "lr", "loss", "loss_y", "loss_u", "loss_v"]


@dataclass
class TrainConfig:
    """Optimizer, schedule, and data-sampling settings."""

    lr0: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    halve_every: int = 100_000
    max_steps: int = 2000
    batch_size: int = 4
    patch_size: int = 256  # desk scale uses 64
    charbonnier_eps: float = 1e-3
    weight_y: float = 10.0
    weight_u: float = 1.0
    weight_v: float = 1.0
    seed: int = 0
    log_every: int = 10
    checkpoint_every: int = 0  # 0 = final checkpoint only
    deterministic: bool = False

    def __post_init__(self):
        for name in (
            "lr0", "beta1", "beta2", "adam_eps", "halve_every", "max_steps",
            "batch_size", "patch_size", "charbonnier_eps", "weight_y", "weight_u", "weight_v",
        ):
            if getattr(self, name) <= 0 and name != "lr0":
                raise ValueError(f"{name} must be positive")
        if self.lr0 < 0:
            raise ValueError("lr0 must be non-negative")


def charbonnier(x: torch.Tensor, x_hat: torch.Tensor, eps: float) -> torch.Tensor:
    """Mean over elements of sqrt((x - x_hat)^2 + eps^2)."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return torch.mean(torch.sqrt((x - x_hat) ** 2 + eps * eps))


def weighted_yuv_loss(
    x: torch.Tensor,
    x_hat: torch.Tensor,
    eps: float,
    weights: tuple[float, float, float] = (10.0, 1.0, 1.0),
) -> torch.Tensor:
    """10:1:1 weighted per-component Charbonnier; x and x_hat are (..., 3, H, W)."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    if x.shape[-3] != 3:
        raise ValueError(f"expected 3 components on axis -3, got {x.shape[-3]}")
    wy, wu, wv = weights
    return (
        wy * charbonnier(x[..., 0, :, :], x_hat[..., 0, :, :], eps)
        + wu * charbonnier(x[..., 1, :, :], x_hat[..., 1, :, :], eps)
        + wv * charbonnier(x[..., 2, :, :], x_hat[..., 2, :, :], eps)
    )


def scheduled_lr(step: int, cfg: TrainConfig) -> float:
    """lr0 * 2^-(completed steps // halve_every); monotone non-increasing."""
    return cfg.lr0 * 0.5 ** (step // cfg.halve_every)


@dataclass
class TrainState:
    """Step counter, Adam moments, and the current scheduled learning rate."""

    step: int
    m: dict[str, torch.Tensor]
    v: dict[str, torch.Tensor]
    lr: float

    @classmethod
    def init(cls, params: dict[str, torch.Tensor], cfg: TrainConfig) -> "TrainState":
        zeros = {name: torch.zeros_like(p) for name, p in params.items()}
        zeros2 = {name: torch.zeros_like(p) for name, p in params.items()}
        return cls(step=0, m=zeros, v=zeros2, lr=scheduled_lr(0, cfg))


def adam_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    state: TrainState,
    cfg: TrainConfig,
) -> None:
    """One bias-corrected Adam update in place; increments the step counter.

    A non-finite gradient aborts with a diagnostic naming the parameter.
    """
    for name, g in grads.items():
        if g is None:
            raise ValueError(f"no gradient for parameter '{name}'")
        if not torch.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient for parameter '{name}'")
    lr = scheduled_lr(state.step, cfg)
    t = state.step + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            m = state.m[name]
            v = state.v[name]
            m.mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
            v.mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
            p.addcdiv_(m / bc1, (v / bc2).sqrt_().add_(cfg.adam_eps), value=-lr)
    state.step = t
    state.lr = scheduled_lr(t, cfg)


def _batch_tensors(
    pairs: list[TrainingPair],
    cfg: TrainConfig,
    rng: np.random.Generator,
    dtype: torch.dtype,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    lossy, lossless, qp_planes = [], [], []
    for _ in range(cfg.batch_size):
        entry = pairs[int(rng.integers(len(pairs)))]
        patch = sample_patch_pair(entry.lossy, entry.lossless, entry.qp, cfg.patch_size, rng)
        lossy.append(torch.from_numpy(patch.lossy.planes))
        lossless.append(torch.from_numpy(patch.lossless.planes))
        qp_planes.append(
            torch.from_numpy(make_qp_plane(patch.qp, cfg.patch_size, cfg.patch_size).plane)
        )
    x = torch.stack(lossy).to(dtype)
    target = torch.stack(lossless).to(dtype)
    qp = torch.stack(qp_planes).unsqueeze(1).to(dtype)
    return x, target, qp


def train(
    manifest_path: str,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir: str,
) -> ParameterStore:
    """Run the training loop and write checkpoints plus a CSV loss log.

    Writes ``loss_log.csv`` and ``checkpoint_final.ckpt`` (plus periodic
    ``checkpoint_step<N>.ckpt`` when checkpoint_every > 0) into ``out_dir``
    and returns the final ParameterStore.
    """
    if train_cfg.patch_size % model_cfg.alignment:
        raise ValueError(
            f"patch_size ({train_cfg.patch_size}) must be divisible by {model_cfg.alignment}"
        )
    pairs = read_train_manifest(manifest_path)
    if not pairs:
        raise ValueError(f"empty manifest: {manifest_path}")

    if train_cfg.deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)
    torch.manual_seed(train_cfg.seed)
    rng = np.random.default_rng(train_cfg.seed)

    model = HVPPNet(model_cfg)
    model.train()
    params = dict(model.named_parameters())
    state = TrainState.init(params, train_cfg)
    eps = train_cfg.charbonnier_eps
    weights = (train_cfg.weight_y, train_cfg.weight_u, train_cfg.weight_v)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "loss_log.csv"
    with open(log_path, "w", newline="") as log_file:
        writer = csv.writer(log_file)
        writer.writerow(LOSS_LOG_HEADER)
        for _ in range(train_cfg.max_steps):
            x, target, qp = _batch_tensors(pairs, train_cfg, rng, torch.float32)
            output = model(x, qp)
            loss_y = charbonnier(target[:, 0], output[:, 0], eps)
            loss_u = charbonnier(target[:, 1], output[:, 1], eps)
            loss_v = charbonnier(target[:, 2], output[:, 2], eps)
            loss = weights[0] * loss_y + weights[1] * loss_u + weights[2] * loss_v

            model.zero_grad(set_to_none=True)
            loss.backward()
            lr_used = scheduled_lr(state.step, train_cfg)
            adam_step(params, {n: p.grad for n, p in params.items()}, state, train_cfg)

            if (
                state.step == 1
                or state.step == train_cfg.max_steps
                or state.step % train_cfg.log_every == 0
            ):
                writer.writerow(
                    [
                        state.step,
                        repr(lr_used),
                        repr(loss.item()),
                        repr(loss_y.item()),
                        repr(loss_u.item()),
                        repr(loss_v.item()),
                    ]
                )
            if train_cfg.checkpoint_every and state.step % train_cfg.checkpoint_every == 0:
                store = ParameterStore.from_model(model, step=state.step, seed=train_cfg.seed)
                save_checkpoint(store, str(out / f"checkpoint_step{state.step}.ckpt"))

    store = ParameterStore.from_model(model, step=state.step, seed=train_cfg.seed)
    save_checkpoint(store, str(out / "checkpoint_final.ckpt"))
    return store


def parse_config_file(path: str) -> tuple[ModelConfig, TrainConfig]:
    """Parse a key=value text config holding model and training settings.

    Keys are the union of ModelConfig and TrainConfig field names (the two
    sets are disjoint); unknown keys are errors. Missing keys take their
    defaults. Blank lines and lines starting with '#' are ignored.
    """
    model_fields = {f.name: f for f in dataclasses.fields(ModelConfig)}
    train_fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    model_kwargs: dict = {}
    train_kwargs: dict = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in model_fields:
                spec, target = model_fields[key], model_kwargs
            elif key in train_fields:
                spec, target = train_fields[key], train_kwargs
            else:
                raise ValueError(f"{path}:{line_no}: unknown config key '{key}'")
            target[key] = _parse_field(spec, value, path, line_no)
    return ModelConfig(**model_kwargs), TrainConfig(**train_kwargs)


def _parse_field(spec: dataclasses.Field, value: str, path: str, line_no: int):
    try:
        if spec.type in ("int", int):
            return int(value)
        if spec.type in ("float", float):
            return float(value)
        if spec.type in ("bool", bool):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise ValueError(value)
        return value
    except ValueError as exc:
        raise ValueError(f"{path}:{line_no}: bad value for '{spec.name}': {value!r}") from exc
