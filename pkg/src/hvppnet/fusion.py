"""Attention-weighted fusion of the local (CNN) and global (windowed
attention) feature branches.

Two weight families are produced from the branch pair:

* spatial: one map per branch, softmax-normalized over all H*W positions,
  obtained by correlating a pooled-softmax query of each branch with a key
  built from the summed branches;
* channel: one vector per branch from a squeeze-and-expand bottleneck on the
  pooled branch sum, softmax-normalized across the two branches per channel
  (so the pair sums to one channelwise).

``HybridAttentionFusion`` wires feature extraction and weighting together
and exposes the fusion manners used in ablations: the fine-grained hybrid
weighting, a sequential chain, an additive parallel combination, and the two
single-attention variants.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .blocks import GlobalFeatureExtractor, LocalFeatureExtractor, polarized_pool

__all__ = [
    "FUSION_MODES",
    "SpatialAttentionFusion",
    "ChannelAttentionFusion",
    "fuse_hybrid",
    "HybridAttentionFusion",
]

FUSION_MODES = ("hybrid", "sequential", "parallel", "spatial_only", "channel_only")


def _check_same_shape(f_lf: torch.Tensor, f_gf: torch.Tensor) -> None:
    if f_lf.shape != f_gf.shape:
        raise ValueError(f"branch shapes differ: {tuple(f_lf.shape)} vs {tuple(f_gf.shape)}")


class SpatialAttentionFusion(nn.Module):
    """Position weights for the local/global branch pair.

    Each branch gets a 1x1 query projection to C/2 channels; the branches are
    summed and projected once to a shared C/2-channel key. A branch's weight
    map is the softmax (over all positions) of the correlation between its
    pooled-softmax query vector and the flattened key. With ``rescale`` the
    maps are multiplied by H*W afterwards to restore activation magnitude;
    by default they are returned as-is and sum to 1 each.
    """

    def __init__(self, channels: int, rescale: bool = False):
        super().__init__()
        if channels % 2:
            raise ValueError(f"channels must be even, got {channels}")
        half = channels // 2
        self.query_local = nn.Conv2d(channels, half, 1)
        self.query_global = nn.Conv2d(channels, half, 1)
        self.key = nn.Conv2d(channels, half, 1)
        self.rescale = rescale

    def forward(self, f_lf: torch.Tensor, f_gf: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        _check_same_shape(f_lf, f_gf)
        if f_lf.shape[1] != self.key.in_channels:
            raise ValueError(f"expected {self.key.in_channels} channels, got {f_lf.shape[1]}")
        b, _, h, w = f_lf.shape
        key = self.key(f_lf + f_gf).flatten(2)  # (B, C/2, H*W)

        def branch_weight(query: torch.Tensor) -> torch.Tensor:
            pooled = polarized_pool(query)  # (B, C/2)
            logits = torch.einsum("bc,bcn->bn", pooled, key)  # (B, H*W)
            weight = torch.softmax(logits, dim=1).view(b, 1, h, w)
            if self.rescale:
                weight = weight * (h * w)
            return weight

        return branch_weight(self.query_local(f_lf)), branch_weight(self.query_global(f_gf))


class ChannelAttentionFusion(nn.Module):
    """Two-way per-channel weights for the branch pair.

    The summed branches are globally average pooled, squeezed C -> C/r with
    a PReLU, expanded back to C once per branch, and the two logits are
    softmaxed against each other per channel: w_lf[c] + w_gf[c] == 1.
    """

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.squeeze = nn.Linear(channels, hidden)
        self.act = nn.PReLU(init=0.25)
        self.expand_local = nn.Linear(hidden, channels)
        self.expand_global = nn.Linear(hidden, channels)

    def forward(self, f_lf: torch.Tensor, f_gf: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        _check_same_shape(f_lf, f_gf)
        if f_lf.shape[1] != self.squeeze.in_features:
            raise ValueError(f"expected {self.squeeze.in_features} channels, got {f_lf.shape[1]}")
        pooled = (f_lf + f_gf).mean(dim=(2, 3))  # (B, C)
        z = self.act(self.squeeze(pooled))
        logits = torch.stack([self.expand_local(z), self.expand_global(z)], dim=1)  # (B, 2, C)
        weights = torch.softmax(logits, dim=1)
        w_lf = weights[:, 0].unsqueeze(-1).unsqueeze(-1)  # (B, C, 1, 1)
        w_gf = weights[:, 1].unsqueeze(-1).unsqueeze(-1)
        return w_lf, w_gf


def fuse_hybrid(
    f_lf: torch.Tensor,
    f_gf: torch.Tensor,
    spatial: tuple[torch.Tensor, torch.Tensor],
    channel: tuple[torch.Tensor, torch.Tensor],
) -> torch.Tensor:
    """Joint space/channel weighting of the two branches.

    Computes (w_c_lf * w_s_lf) * f_lf + (w_c_gf * w_s_gf) * f_gf with the
    channel vectors broadcast over positions and the spatial maps broadcast
    over channels. The pre-multiplied form used here agrees with the nested
    per-branch weighting up to floating-point association.
    """
    _check_same_shape(f_lf, f_gf)
    sw_lf, sw_gf = spatial
    cw_lf, cw_gf = channel
    return (cw_lf * sw_lf) * f_lf + (cw_gf * sw_gf) * f_gf


class HybridAttentionFusion(nn.Module):
    """Feature extraction plus attention-weighted recombination.

    Runs the local CNN cascade and the global windowed-attention branch on
    the incoming features, then recombines per ``mode``:

    * ``hybrid``: joint weighting, both weight families computed from the
      raw branches (the flagship manner);
    * ``sequential``: channel weighting first, then spatial weights computed
      from and applied to the channel-weighted branches;
    * ``parallel``: channel-weighted sum plus spatial-weighted sum, added;
    * ``spatial_only`` / ``channel_only``: single-attention variants.
    """

    def __init__(
        self,
        channels: int,
        lfem_depth: int = 3,
        n_swin: int = 2,
        heads: int = 4,
        window_side: int = 4,
        cafm_reduction: int = 4,
        mode: str = "hybrid",
        rescale_spatial: bool = False,
    ):
        super().__init__()
        if mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {mode!r}; expected one of {FUSION_MODES}")
        self.local_branch = LocalFeatureExtractor(channels, depth=lfem_depth)
        self.global_branch = GlobalFeatureExtractor(
            channels, depth=n_swin, heads=heads, window_side=window_side
        )
        self.spatial = SpatialAttentionFusion(channels, rescale=rescale_spatial)
        self.channel = ChannelAttentionFusion(channels, reduction=cafm_reduction)
        self.mode = mode

    def forward(self, x: torch.Tensor, mode: str | None = None) -> torch.Tensor:
        mode = self.mode if mode is None else mode
        if mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {mode!r}; expected one of {FUSION_MODES}")
        f_lf = self.local_branch(x)
        f_gf = self.global_branch(x)

        if mode == "hybrid":
            return fuse_hybrid(f_lf, f_gf, self.spatial(f_lf, f_gf), self.channel(f_lf, f_gf))
        if mode == "sequential":
            cw_lf, cw_gf = self.channel(f_lf, f_gf)
            g_lf, g_gf = cw_lf * f_lf, cw_gf * f_gf
            sw_lf, sw_gf = self.spatial(g_lf, g_gf)
            return sw_lf * g_lf + sw_gf * g_gf
        if mode == "parallel":
            cw_lf, cw_gf = self.channel(f_lf, f_gf)
            sw_lf, sw_gf = self.spatial(f_lf, f_gf)
            return (cw_lf * f_lf + cw_gf * f_gf) + (sw_lf * f_lf + sw_gf * f_gf)
        if mode == "spatial_only":
            sw_lf, sw_gf = self.spatial(f_lf, f_gf)
            return sw_lf * f_lf + sw_gf * f_gf
        # channel_only
        cw_lf, cw_gf = self.channel(f_lf, f_gf)
        return cw_lf * f_lf + cw_gf * f_gf
