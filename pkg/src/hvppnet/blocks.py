"""Primitive learnable blocks: residual conv blocks, the local CNN feature
extractor, windowed multi-head self-attention with patch embedding, sub-pixel
upsampling, and the pooled-softmax query compression used by the spatial
fusion weights.

All blocks take channel-first batched tensors (B, C, H, W) and are pure given
(input, parameters): no buffers are mutated during the forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

__all__ = [
    "TokenGrid",
    "window_partition",
    "window_merge",
    "pixel_shuffle",
    "polarized_pool",
    "ResidualBlock",
    "LocalFeatureExtractor",
    "PatchEmbed",
    "WindowAttention",
    "SwinBlock",
    "GlobalFeatureExtractor",
]


def _check_channels(x: torch.Tensor, expected: int, who: str) -> None:
    if x.shape[1] != expected:
        raise ValueError(f"{who}: expected {expected} input channels, got {x.shape[1]}")


@dataclass
class TokenGrid:
    """Windowed token view of a patch grid.

    ``tokens`` is (B, n_windows, T, C) with T = side**2 tokens per window;
    ``grid_h``/``grid_w`` give the patch-grid size the windows tile exactly,
    so n_windows * T == grid_h * grid_w.
    """

    tokens: torch.Tensor
    grid_h: int
    grid_w: int
    side: int

    def __post_init__(self):
        b, nw, t, c = self.tokens.shape
        if t != self.side * self.side:
            raise ValueError(f"window holds {t} tokens but side={self.side} implies {self.side ** 2}")
        if nw * t != self.grid_h * self.grid_w:
            raise ValueError(
                f"{nw} windows x {t} tokens cannot tile a {self.grid_h}x{self.grid_w} grid"
            )


def window_partition(x: torch.Tensor, side: int) -> TokenGrid:
    """(B, C, Hp, Wp) patch grid -> non-overlapping side x side windows of tokens."""
    b, c, hp, wp = x.shape
    if hp % side or wp % side:
        raise ValueError(f"grid {hp}x{wp} not divisible by window side {side}")
    x = x.view(b, c, hp // side, side, wp // side, side)
    x = x.permute(0, 2, 4, 3, 5, 1).contiguous()  # B, nh, nw, side, side, C
    tokens = x.view(b, (hp // side) * (wp // side), side * side, c)
    return TokenGrid(tokens, hp, wp, side)


def window_merge(grid: TokenGrid) -> torch.Tensor:
    """Inverse of window_partition: reassemble tokens to (B, C, Hp, Wp)."""
    b, _, _, c = grid.tokens.shape
    s, hp, wp = grid.side, grid.grid_h, grid.grid_w
    x = grid.tokens.view(b, hp // s, wp // s, s, s, c)
    x = x.permute(0, 5, 1, 3, 2, 4).contiguous()  # B, C, nh, side, nw, side
    return x.view(b, c, hp, wp)


def pixel_shuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """Sub-pixel rearrangement (B, r^2*C, H, W) -> (B, C, r*H, r*W)."""
    if x.shape[1] % (r * r):
        raise ValueError(f"{x.shape[1]} channels not divisible by r^2 = {r * r}")
    return F.pixel_shuffle(x, r)


def polarized_pool(x: torch.Tensor) -> torch.Tensor:
    """Pool a feature map to one softmax-normalized vector: (B, C, H, W) -> (B, C).

    Global average pooling compresses the query side of the spatial
    similarity to a single row, and the softmax intensifies it; each output
    row is on the simplex.
    """
    return torch.softmax(x.mean(dim=(2, 3)), dim=1)


class ResidualBlock(nn.Module):
    """x + conv3x3(prelu(conv3x3(x))), zero padding 1, stride 1."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.act = nn.PReLU(init=0.25)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_channels(x, self.conv1.in_channels, "ResidualBlock")
        return x + self.conv2(self.act(self.conv1(x)))


class LocalFeatureExtractor(nn.Module):
    """Cascade of `depth` conv3x3 + PReLU layers, channel preserving."""

    def __init__(self, channels: int, depth: int = 3):
        super().__init__()
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        layers: list[nn.Module] = []
        for _ in range(depth):
            layers.append(nn.Conv2d(channels, channels, 3, padding=1))
            layers.append(nn.PReLU(init=0.25))
        self.layers = nn.Sequential(*layers)
        self.channels = channels

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_channels(x, self.channels, "LocalFeatureExtractor")
        return self.layers(x)


class PatchEmbed(nn.Module):
    """4x4-kernel stride-4 convolution to a quarter-resolution patch grid,
    split into non-overlapping windows of ``window_side`` x ``window_side``
    patches and flattened to tokens."""

    PATCH = 4

    def __init__(self, channels: int, window_side: int = 4):
        super().__init__()
        self.proj = nn.Conv2d(channels, channels, self.PATCH, stride=self.PATCH)
        self.window_side = window_side

    def forward(self, x: torch.Tensor) -> TokenGrid:
        _check_channels(x, self.proj.in_channels, "PatchEmbed")
        h, w = x.shape[2], x.shape[3]
        align = self.PATCH * self.window_side
        if h % align or w % align:
            raise ValueError(f"input {w}x{h} must be divisible by {align} (callers pad)")
        return window_partition(self.proj(x), self.window_side)


class WindowAttention(nn.Module):
    """Multi-head self-attention over the tokens of each window.

    Q, K, V come from one fused linear projection; attention uses scaled
    dot products with scale 1/sqrt(C/heads) and a per-row softmax, followed
    by an output projection. No relative position bias.
    """

    def __init__(self, channels: int, heads: int):
        super().__init__()
        if channels % heads:
            raise ValueError(f"{channels} channels not divisible by {heads} heads")
        self.heads = heads
        self.scale = (channels // heads) ** -0.5
        self.qkv = nn.Linear(channels, channels * 3)
        self.proj = nn.Linear(channels, channels)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        """tokens: (..., T, C) -> same shape; leading dims are batch-like."""
        shape = tokens.shape
        t, c = shape[-2], shape[-1]
        x = tokens.reshape(-1, t, c)
        qkv = self.qkv(x).reshape(-1, t, 3, self.heads, c // self.heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)  # each (N, heads, T, hd)
        attn = torch.softmax(q @ k.transpose(-2, -1) * self.scale, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(-1, t, c)
        return self.proj(out).reshape(shape)

    def attention_rows(self, tokens: torch.Tensor) -> torch.Tensor:
        """Expose the post-softmax attention matrix for invariant checks."""
        shape = tokens.shape
        t, c = shape[-2], shape[-1]
        x = tokens.reshape(-1, t, c)
        qkv = self.qkv(x).reshape(-1, t, 3, self.heads, c // self.heads)
        q, k, _ = qkv.permute(2, 0, 3, 1, 4)
        return torch.softmax(q @ k.transpose(-2, -1) * self.scale, dim=-1)


class SwinBlock(nn.Module):
    """Pre-norm windowed attention + MLP with residual skips.

    tokens + MSA(LN(tokens)), then result + MLP(LN(result)); the MLP is two
    linear layers around a GELU with hidden width ratio 4. When ``shifted``,
    the patch grid is cyclically shifted by window_side/2 before partitioning
    and shifted back afterwards, so the returned grid is always in canonical
    window layout.
    """

    def __init__(self, channels: int, heads: int, shifted: bool = False, mlp_ratio: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(channels)
        self.attn = WindowAttention(channels, heads)
        self.norm2 = nn.LayerNorm(channels)
        self.mlp = nn.Sequential(
            nn.Linear(channels, mlp_ratio * channels),
            nn.GELU(),
            nn.Linear(mlp_ratio * channels, channels),
        )
        self.shifted = shifted

    def forward(self, grid: TokenGrid) -> TokenGrid:
        s = grid.side
        if self.shifted:
            patch = window_merge(grid)
            patch = torch.roll(patch, shifts=(-(s // 2), -(s // 2)), dims=(2, 3))
            work = window_partition(patch, s)
        else:
            work = grid

        x = work.tokens
        x = x + self.attn(self.norm1(x))
        x = x + self.mlp(self.norm2(x))
        out = TokenGrid(x, work.grid_h, work.grid_w, s)

        if self.shifted:
            patch = window_merge(out)
            patch = torch.roll(patch, shifts=(s // 2, s // 2), dims=(2, 3))
            out = window_partition(patch, s)
        return out


class GlobalFeatureExtractor(nn.Module):
    """Windowed-attention branch at quarter resolution.

    Embeds the input to a stride-4 patch grid, runs ``depth`` attention
    blocks (regular/shifted alternating), merges windows back to the grid,
    expands each patch to its 4x4 sub-pixel content with a learned 1x1
    projection C -> 16*C, and returns to input resolution via sub-pixel
    rearrangement. Output shape equals input shape.
    """

    def __init__(self, channels: int, depth: int = 2, heads: int = 4, window_side: int = 4):
        super().__init__()
        self.embed = PatchEmbed(channels, window_side)
        self.blocks = nn.ModuleList(
            SwinBlock(channels, heads, shifted=bool(i % 2)) for i in range(depth)
        )
        self.expand = nn.Conv2d(channels, PatchEmbed.PATCH**2 * channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        grid = self.embed(x)
        for block in self.blocks:
            grid = block(grid)
        patch = window_merge(grid)
        return pixel_shuffle(self.expand(patch), PatchEmbed.PATCH)
