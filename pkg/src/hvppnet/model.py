"""End-to-end restoration network, whole-frame tiled inference, and
checkpoint serialization.

The network is residual: a 3x3 conv fuses the lossy frame with its QP
conditioning plane and lifts it to C channels, a stack of hybrid fusion
blocks (residual blocks + attention fusion) refines the features, and a
3x3 reconstruction conv produces a 3-channel residual that is added back
onto the input. Zeroing the reconstruction conv therefore makes the whole
model an exact identity.
"""

from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import ResidualBlock
from .fusion import FUSION_MODES, HybridAttentionFusion
from .yuv import Frame444, Yuv420Frame, downsample_444_to_420, make_qp_plane, upsample_420_to_444

__all__ = [
    "ModelConfig",
    "HybridFusionBlock",
    "HVPPNet",
    "ParameterStore",
    "CheckpointError",
    "expected_param_count",
    "save_checkpoint",
    "load_checkpoint",
    "enhance_frame",
]

CHECKPOINT_MAGIC = b"SCHVPP1"


@dataclass
class ModelConfig:
    """Architectural hyperparameters; every array shape derives from these."""

    channels: int = 64
    in_channels: int = 4  # Y, U, V + QP plane
    num_hfb: int = 4
    rb_per_hfb: int = 2
    lfem_depth: int = 3
    n_swin: int = 2
    heads: int = 4
    window_side: int = 4
    cafm_reduction: int = 4
    fusion_mode: str = "hybrid"
    rescale_spatial: bool = False
    tile_size: int = 256
    tile_overlap: int = 16

    def __post_init__(self):
        if self.channels % 2 or self.channels % self.heads:
            raise ValueError(
                f"channels ({self.channels}) must be divisible by 2 and by heads ({self.heads})"
            )
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {self.fusion_mode!r}")
        if self.tile_size % self.alignment:
            raise ValueError(
                f"tile_size ({self.tile_size}) must be divisible by {self.alignment}"
            )
        if not (0 <= self.tile_overlap < self.tile_size):
            raise ValueError("tile_overlap must lie in [0, tile_size)")
        for name in ("num_hfb", "rb_per_hfb", "lfem_depth", "n_swin"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def alignment(self) -> int:
        """Input dims must be divisible by this (patch stride x window side)."""
        return 4 * self.window_side

    @classmethod
    def desk_scale(cls) -> "ModelConfig":
        """Small configuration for CPU-scale experiments and tests."""
        return cls(channels=16, num_hfb=1, tile_size=64, tile_overlap=16)


def expected_param_count(cfg: ModelConfig) -> int:
    """Closed-form trainable parameter count (2,004,443 for the defaults)."""
    c, cin = cfg.channels, cfg.in_channels
    hid = max(c // cfg.cafm_reduction, 1)
    head = 9 * c * cin + c
    rb = cfg.rb_per_hfb * (2 * (9 * c * c + c) + 1)
    lfem = cfg.lfem_depth * (9 * c * c + c + 1)
    embed = 16 * c * c + c
    swin = cfg.n_swin * (12 * c * c + 13 * c)
    expand = 16 * c * c + 16 * c
    safm = 3 * (c * (c // 2) + c // 2)
    cafm = (c * hid + hid) + 1 + 2 * (hid * c + c)
    tail = 27 * c + 3
    return head + cfg.num_hfb * (rb + lfem + embed + swin + expand + safm + cafm) + tail


class HybridFusionBlock(nn.Module):
    """Residual-block preprocessing followed by attention fusion."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.rbs = nn.Sequential(*[ResidualBlock(cfg.channels) for _ in range(cfg.rb_per_hfb)])
        self.hafm = HybridAttentionFusion(
            cfg.channels,
            lfem_depth=cfg.lfem_depth,
            n_swin=cfg.n_swin,
            heads=cfg.heads,
            window_side=cfg.window_side,
            cafm_reduction=cfg.cafm_reduction,
            mode=cfg.fusion_mode,
            rescale_spatial=cfg.rescale_spatial,
        )

    def forward(self, x: torch.Tensor, mode: str | None = None) -> torch.Tensor:
        return self.hafm(self.rbs(x), mode=mode)


class HVPPNet(nn.Module):
    """QP-conditioned residual restoration network for decoded frames."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        self.head = nn.Conv2d(cfg.in_channels, cfg.channels, 3, padding=1)
        self.hfbs = nn.ModuleList(HybridFusionBlock(cfg) for _ in range(cfg.num_hfb))
        self.tail = nn.Conv2d(cfg.channels, 3, 3, padding=1)

    def forward(self, x: torch.Tensor, qp_plane: torch.Tensor, mode: str | None = None) -> torch.Tensor:
        """x: (B, 3, H, W) in [0, 1]; qp_plane: (B, 1, H, W).

        Returns the unclamped restored frame (clamping happens only at
        frame-assembly time so the loss sees raw values).
        """
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W) input, got {tuple(x.shape)}")
        if qp_plane.shape != (x.shape[0], 1, x.shape[2], x.shape[3]):
            raise ValueError(
                f"qp plane shape {tuple(qp_plane.shape)} does not match input {tuple(x.shape)}"
            )
        align = self.config.alignment
        if x.shape[2] % align or x.shape[3] % align:
            raise ValueError(f"input dims {x.shape[3]}x{x.shape[2]} must be divisible by {align}")
        f = self.head(torch.cat([x, qp_plane], dim=1))
        for hfb in self.hfbs:
            f = hfb(f, mode=mode)
        return x + self.tail(f)


class CheckpointError(ValueError):
    """Checkpoint file does not match the expected format or configuration."""


@dataclass
class ParameterStore:
    """Named trainable arrays plus the config snapshot, step, and seed."""

    config: ModelConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    seed: int = 0

    @classmethod
    def from_model(cls, model: HVPPNet, step: int = 0, seed: int = 0) -> "ParameterStore":
        arrays = {
            name: tensor.detach().cpu().numpy().astype(np.float32)
            for name, tensor in model.state_dict().items()
        }
        return cls(config=model.config, arrays=arrays, step=step, seed=seed)

    def load_into(self, model: HVPPNet) -> None:
        """Copy arrays into ``model``, validating names and shapes.

        The model's state dict is the expected name/shape table derived from
        its config; the first mismatch raises a CheckpointError naming it.
        """
        expected = model.state_dict()
        for name, tensor in expected.items():
            if name not in self.arrays:
                raise CheckpointError(f"missing array '{name}'")
            arr = self.arrays[name]
            if tuple(arr.shape) != tuple(tensor.shape):
                raise CheckpointError(
                    f"parameter '{name}': checkpoint shape {tuple(arr.shape)}, "
                    f"model expects {tuple(tensor.shape)}"
                )
        for name in self.arrays:
            if name not in expected:
                raise CheckpointError(f"unexpected array '{name}'")
        with torch.no_grad():
            for name, tensor in expected.items():
                tensor.copy_(torch.from_numpy(self.arrays[name].copy()).to(tensor.dtype))


def _config_to_lines(cfg: ModelConfig) -> list[str]:
    lines = []
    for f_ in dataclasses.fields(cfg):
        value = getattr(cfg, f_.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f_.name}={value}")
    return lines


def _config_from_pairs(pairs: dict[str, str]) -> ModelConfig:
    kwargs = {}
    for f_ in dataclasses.fields(ModelConfig):
        if f_.name not in pairs:
            raise CheckpointError(f"missing config field '{f_.name}'")
        raw = pairs.pop(f_.name)
        try:
            if f_.type in ("int", int):
                kwargs[f_.name] = int(raw)
            elif f_.type in ("bool", bool):
                if raw not in ("true", "false"):
                    raise ValueError(raw)
                kwargs[f_.name] = raw == "true"
            else:
                kwargs[f_.name] = raw
        except ValueError as exc:
            raise CheckpointError(f"bad value for config field '{f_.name}': {raw!r}") from exc
    return ModelConfig(**kwargs)


def save_checkpoint(store: ParameterStore, path: str) -> None:
    """Serialize a ParameterStore.

    Layout: magic "SCHVPP1"; uint32 little-endian manifest length; text
    manifest (config key=value lines, then one line per array:
    ``<name> dtype=f32 dims=<d0>,<d1>,...``); raw little-endian float32
    payloads in manifest order.
    """
    lines = _config_to_lines(store.config)
    lines.append(f"step={store.step}")
    lines.append(f"seed={store.seed}")
    for name, arr in store.arrays.items():
        dims = ",".join(str(d) for d in arr.shape)
        lines.append(f"{name} dtype=f32 dims={dims}")
    manifest = ("\n".join(lines) + "\n").encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(manifest)))
        f.write(manifest)
        for arr in store.arrays.values():
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str) -> ParameterStore:
    """Inverse of save_checkpoint; raises CheckpointError naming the first
    offending field on corrupt or truncated files."""
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad magic: expected {CHECKPOINT_MAGIC!r}, got {magic!r}")
        header = f.read(4)
        if len(header) < 4:
            raise CheckpointError("truncated manifest length")
        (manifest_len,) = struct.unpack("<I", header)
        manifest = f.read(manifest_len)
        if len(manifest) < manifest_len:
            raise CheckpointError("truncated manifest")

        pairs: dict[str, str] = {}
        descriptors: list[tuple[str, tuple[int, ...]]] = []
        for line in manifest.decode("utf-8").splitlines():
            if not line:
                continue
            if " " in line:
                fields = line.split(" ")
                if len(fields) != 3 or fields[1] != "dtype=f32" or not fields[2].startswith("dims="):
                    raise CheckpointError(f"bad array descriptor: {line!r}")
                try:
                    dims = tuple(int(d) for d in fields[2][len("dims="):].split(","))
                except ValueError as exc:
                    raise CheckpointError(f"bad dims in descriptor for '{fields[0]}'") from exc
                descriptors.append((fields[0], dims))
            else:
                if "=" not in line:
                    raise CheckpointError(f"bad config line: {line!r}")
                key, value = line.split("=", 1)
                pairs[key] = value

        try:
            step = int(pairs.pop("step"))
            seed = int(pairs.pop("seed"))
        except KeyError as exc:
            raise CheckpointError(f"missing config field '{exc.args[0]}'") from exc
        config = _config_from_pairs(pairs)
        if pairs:
            raise CheckpointError(f"unknown config field '{next(iter(pairs))}'")

        arrays: dict[str, np.ndarray] = {}
        for name, dims in descriptors:
            nbytes = int(np.prod(dims)) * 4
            buf = f.read(nbytes)
            if len(buf) < nbytes:
                raise CheckpointError(f"truncated payload for array '{name}'")
            arrays[name] = np.frombuffer(buf, dtype="<f4").reshape(dims).astype(np.float32)
        if f.read(1):
            raise CheckpointError("trailing data after final array payload")
    return ParameterStore(config=config, arrays=arrays, step=step, seed=seed)


def _tile_starts(total: int, tile: int, step: int) -> list[int]:
    starts = list(range(0, max(total - tile, 0) + 1, step))
    if starts[-1] != total - tile:
        starts.append(total - tile)
    return starts


def enhance_frame(frame: Yuv420Frame, qp: int, model: HVPPNet) -> Yuv420Frame:
    """Restore one decoded frame with overlap-blended tiled inference.

    Converts to 4:4:4, reflect-pads to the window alignment, runs the model
    per tile with overlaps blended by arithmetic mean, crops the padding,
    clamps to [0, 1], and converts back to 4:2:0.
    """
    cfg = model.config
    align = cfg.alignment
    if min(frame.width, frame.height) < align:
        raise ValueError(f"frame must be at least {align}x{align}, got {frame.width}x{frame.height}")

    f444 = upsample_420_to_444(frame)
    h, w = f444.height, f444.width
    dtype = next(model.parameters()).dtype
    x = torch.from_numpy(f444.planes).to(dtype).unsqueeze(0)

    pad_h = (align - h % align) % align
    pad_w = (align - w % align) % align
    if pad_h or pad_w:
        x = F.pad(x, (0, pad_w, 0, pad_h), mode="reflect")
    hp, wp = h + pad_h, w + pad_w

    qp_full = torch.from_numpy(make_qp_plane(qp, wp, hp).plane).to(dtype).view(1, 1, hp, wp)

    tile_h = min(cfg.tile_size, hp)
    tile_w = min(cfg.tile_size, wp)
    step_h = max(tile_h - cfg.tile_overlap, 1)
    step_w = max(tile_w - cfg.tile_overlap, 1)

    acc = np.zeros((3, hp, wp), dtype=np.float64)
    cnt = np.zeros((1, hp, wp), dtype=np.float64)
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            for y0 in _tile_starts(hp, tile_h, step_h):
                for x0 in _tile_starts(wp, tile_w, step_w):
                    tile = x[:, :, y0 : y0 + tile_h, x0 : x0 + tile_w]
                    qp_tile = qp_full[:, :, y0 : y0 + tile_h, x0 : x0 + tile_w]
                    out = model(tile, qp_tile)[0].cpu().numpy().astype(np.float64)
                    acc[:, y0 : y0 + tile_h, x0 : x0 + tile_w] += out
                    cnt[:, y0 : y0 + tile_h, x0 : x0 + tile_w] += 1.0
    finally:
        if was_training:
            model.train()

    blended = (acc / cnt)[:, :h, :w]
    restored = Frame444(np.clip(blended, 0.0, 1.0).astype(np.float32))
    return downsample_444_to_420(restored)
