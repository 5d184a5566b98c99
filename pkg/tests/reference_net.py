"""Independent straight-line numpy re-implementation of the network forward
pass, used as an oracle for the torch path. Everything here is written
directly from the layer definitions with explicit loops/index walks and no
torch; only the parameter values come from the model's state dict."""

from __future__ import annotations

import numpy as np
from scipy.special import erf


def conv2d(x, w, b, stride=1, pad=0):
    """x: (C, H, W); w: (O, C, kh, kw); zero padding."""
    c, h, wd = x.shape
    o, _, kh, kw = w.shape
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    oh = (x.shape[1] - kh) // stride + 1
    ow = (x.shape[2] - kw) // stride + 1
    out = np.empty((o, oh, ow), dtype=np.float64)
    for oc in range(o):
        for y in range(oh):
            for xx in range(ow):
                patch = x[:, y * stride : y * stride + kh, xx * stride : xx * stride + kw]
                out[oc, y, xx] = np.sum(w[oc] * patch) + b[oc]
    return out


def prelu(x, slope):
    return np.where(x > 0, x, slope * x)


def linear(x, w, b):
    return x @ w.T + b


def layer_norm(x, gamma, beta, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def softmax(x, axis=-1):
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def window_partition(x, side):
    """(C, Hp, Wp) -> (n_windows, T, C) by explicit index walk."""
    c, hp, wp = x.shape
    nh, nw = hp // side, wp // side
    tokens = np.empty((nh * nw, side * side, c), dtype=x.dtype)
    for wy in range(nh):
        for wx in range(nw):
            for ty in range(side):
                for tx in range(side):
                    tokens[wy * nw + wx, ty * side + tx] = x[:, wy * side + ty, wx * side + tx]
    return tokens


def window_merge(tokens, side, hp, wp):
    nw = wp // side
    c = tokens.shape[-1]
    x = np.empty((c, hp, wp), dtype=tokens.dtype)
    for wy in range(hp // side):
        for wx in range(nw):
            for ty in range(side):
                for tx in range(side):
                    x[:, wy * side + ty, wx * side + tx] = tokens[wy * nw + wx, ty * side + tx]
    return x


def attention(tokens, qkv_w, qkv_b, proj_w, proj_b, heads):
    """tokens: (T, C); fused qkv, per-head scaled dot-product, row softmax."""
    t, c = tokens.shape
    hd = c // heads
    qkv = linear(tokens, qkv_w, qkv_b).reshape(t, 3, heads, hd)
    out = np.empty((t, c), dtype=tokens.dtype)
    for h in range(heads):
        q, k, v = qkv[:, 0, h], qkv[:, 1, h], qkv[:, 2, h]
        attn = softmax(q @ k.T / np.sqrt(hd), axis=-1)
        out[:, h * hd : (h + 1) * hd] = attn @ v
    return linear(out, proj_w, proj_b)


def pixel_shuffle(x, r):
    """(r^2*C, h, w) -> (C, r*h, r*w) by explicit index walk."""
    c2, h, w = x.shape
    c = c2 // (r * r)
    out = np.empty((c, h * r, w * r), dtype=x.dtype)
    for oc in range(c):
        for dy in range(r):
            for dx in range(r):
                out[oc, dy::r, dx::r] = x[oc * r * r + dy * r + dx]
    return out


def pixel_unshuffle(x, r):
    """Inverse of pixel_shuffle: (C, r*h, r*w) -> (r^2*C, h, w)."""
    c, hr, wr = x.shape
    out = np.empty((c * r * r, hr // r, wr // r), dtype=x.dtype)
    for oc in range(c):
        for dy in range(r):
            for dx in range(r):
                out[oc * r * r + dy * r + dx] = x[oc, dy::r, dx::r]
    return out


def swin_block(patch, sd, prefix, side, heads, shifted):
    """patch: (C, Hp, Wp); pre-norm attention + MLP per window."""
    c, hp, wp = patch.shape
    if shifted:
        patch = np.roll(patch, (-(side // 2), -(side // 2)), axis=(1, 2))
    tokens = window_partition(patch, side)
    out = np.empty_like(tokens)
    for wi in range(tokens.shape[0]):
        x = tokens[wi]
        x = x + attention(
            layer_norm(x, sd[f"{prefix}.norm1.weight"], sd[f"{prefix}.norm1.bias"]),
            sd[f"{prefix}.attn.qkv.weight"],
            sd[f"{prefix}.attn.qkv.bias"],
            sd[f"{prefix}.attn.proj.weight"],
            sd[f"{prefix}.attn.proj.bias"],
            heads,
        )
        x = x + linear(
            gelu(
                linear(
                    layer_norm(x, sd[f"{prefix}.norm2.weight"], sd[f"{prefix}.norm2.bias"]),
                    sd[f"{prefix}.mlp.0.weight"],
                    sd[f"{prefix}.mlp.0.bias"],
                )
            ),
            sd[f"{prefix}.mlp.2.weight"],
            sd[f"{prefix}.mlp.2.bias"],
        )
        out[wi] = x
    merged = window_merge(out, side, hp, wp)
    if shifted:
        merged = np.roll(merged, (side // 2, side // 2), axis=(1, 2))
    return merged


def gfem(x, sd, prefix, cfg):
    patch = conv2d(x, sd[f"{prefix}.embed.proj.weight"], sd[f"{prefix}.embed.proj.bias"], stride=4)
    for k in range(cfg.n_swin):
        patch = swin_block(
            patch, sd, f"{prefix}.blocks.{k}", cfg.window_side, cfg.heads, shifted=bool(k % 2)
        )
    expanded = conv2d(patch, sd[f"{prefix}.expand.weight"], sd[f"{prefix}.expand.bias"])
    return pixel_shuffle(expanded, 4)


def lfem(x, sd, prefix, depth):
    for k in range(depth):
        x = conv2d(x, sd[f"{prefix}.layers.{2 * k}.weight"], sd[f"{prefix}.layers.{2 * k}.bias"], pad=1)
        x = prelu(x, sd[f"{prefix}.layers.{2 * k + 1}.weight"][0])
    return x


def safm(f_lf, f_gf, sd, prefix):
    key = conv2d(f_lf + f_gf, sd[f"{prefix}.key.weight"], sd[f"{prefix}.key.bias"])
    key_flat = key.reshape(key.shape[0], -1)  # (C/2, H*W)

    def weight(q):
        pooled = softmax(q.mean(axis=(1, 2)))
        logits = pooled @ key_flat  # (H*W,)
        return softmax(logits).reshape(f_lf.shape[1], f_lf.shape[2])

    w_lf = weight(conv2d(f_lf, sd[f"{prefix}.query_local.weight"], sd[f"{prefix}.query_local.bias"]))
    w_gf = weight(conv2d(f_gf, sd[f"{prefix}.query_global.weight"], sd[f"{prefix}.query_global.bias"]))
    return w_lf, w_gf


def cafm(f_lf, f_gf, sd, prefix):
    pooled = (f_lf + f_gf).mean(axis=(1, 2))
    z = prelu(linear(pooled, sd[f"{prefix}.squeeze.weight"], sd[f"{prefix}.squeeze.bias"]),
              sd[f"{prefix}.act.weight"][0])
    logit_lf = linear(z, sd[f"{prefix}.expand_local.weight"], sd[f"{prefix}.expand_local.bias"])
    logit_gf = linear(z, sd[f"{prefix}.expand_global.weight"], sd[f"{prefix}.expand_global.bias"])
    stacked = softmax(np.stack([logit_lf, logit_gf]), axis=0)
    return stacked[0], stacked[1]


def hafm(x, sd, prefix, cfg):
    f_lf = lfem(x, sd, f"{prefix}.local_branch", cfg.lfem_depth)
    f_gf = gfem(x, sd, f"{prefix}.global_branch", cfg)
    w_s_lf, w_s_gf = safm(f_lf, f_gf, sd, f"{prefix}.spatial")
    if cfg.rescale_spatial:
        area = x.shape[1] * x.shape[2]
        w_s_lf, w_s_gf = w_s_lf * area, w_s_gf * area
    w_c_lf, w_c_gf = cafm(f_lf, f_gf, sd, f"{prefix}.channel")
    w_c_lf = w_c_lf[:, None, None]
    w_c_gf = w_c_gf[:, None, None]
    return (w_c_lf * w_s_lf[None]) * f_lf + (w_c_gf * w_s_gf[None]) * f_gf


def residual_block(x, sd, prefix):
    h = conv2d(x, sd[f"{prefix}.conv1.weight"], sd[f"{prefix}.conv1.bias"], pad=1)
    h = prelu(h, sd[f"{prefix}.act.weight"][0])
    return x + conv2d(h, sd[f"{prefix}.conv2.weight"], sd[f"{prefix}.conv2.bias"], pad=1)


def forward(sd, cfg, x, qp_plane):
    """Full network in hybrid mode. x: (3, H, W); qp_plane: (H, W)."""
    f = conv2d(np.concatenate([x, qp_plane[None]], axis=0), sd["head.weight"], sd["head.bias"], pad=1)
    for i in range(cfg.num_hfb):
        for j in range(cfg.rb_per_hfb):
            f = residual_block(f, sd, f"hfbs.{i}.rbs.{j}")
        f = hafm(f, sd, f"hfbs.{i}.hafm", cfg)
    return x + conv2d(f, sd["tail.weight"], sd["tail.bias"], pad=1)


def state_dict_to_numpy(model):
    return {name: t.detach().cpu().numpy().astype(np.float64) for name, t in model.state_dict().items()}
