"""CMSA, MFSA and DCC, and their composition into the CcViT-DA block."""

import math

from ..autodiff import Parameter, ops
from ..autodiff.nn import Conv2d, LayerNorm, Linear, Module, trunc_normal
from ..autodiff.tensor import DEFAULT_DTYPE
from .config import BlockConfig, ConfigError, TokenMap


def tokens_to_map(x, grid):
    """``N x P x C`` -> ``N x C x gh x gw``."""
    n, _, c = x.shape
    return ops.reshape(ops.swapaxes(x, 1, 2), (n, c, grid[0], grid[1]))


def map_to_tokens(x):
    """``N x C x H x W`` -> ``N x (H*W) x C``."""
    n, c, h, w = x.shape
    return ops.swapaxes(ops.reshape(x, (n, c, h * w)), 1, 2)


def _batched(*ts):
    squeeze = ts[0].ndim == 2
    if squeeze:
        ts = tuple(ops.reshape(t, (1,) + t.shape) for t in ts)
    return squeeze, ts


# ---------------------------------------------------------------------------
# attention cores (no projections)


def window_attention(q, k, v, grid, window, heads):
    """Multi-head scaled dot-product attention inside non-overlapping windows.

    ``q, k, v`` are ``N x P x C`` (or ``P x C``) on a ``grid`` of patches; each
    ``window[0] x window[1]`` window attends only to itself, scaled by
    ``1/sqrt(C / heads)``.
    """
    squeeze, (q, k, v) = _batched(q, k, v)
    n, p, c = q.shape
    gh, gw = grid
    wh, ww = window
    if gh * gw != p:
        raise ValueError(f"grid {grid} does not match {p} tokens")
    if gh % wh or gw % ww:
        raise ConfigError("window", f"token grid {gh}x{gw} not divisible by window {window}")
    if c % heads:
        raise ConfigError("heads", f"{c} channels not divisible by {heads} heads")
    ch = c // heads
    pw = wh * ww

    def split(t):
        t = ops.window_partition(ops.reshape(t, (n, gh, gw, c)), wh, ww)
        t = ops.reshape(t, (t.shape[0], pw, heads, ch))
        return ops.transpose(t, (0, 2, 1, 3))  # B' x heads x Pw x Ch

    qs, ks, vs = split(q), split(k), split(v)
    scores = ops.matmul(qs, ops.swapaxes(ks, -1, -2), kind="attn_qk") * (1.0 / math.sqrt(ch))
    attn = ops.softmax(scores, axis=-1)
    out = ops.matmul(attn, vs, kind="attn_av")
    out = ops.reshape(ops.transpose(out, (0, 2, 1, 3)), (out.shape[0], pw, c))
    out = ops.reshape(ops.window_merge(out, wh, ww, gh, gw), (n, p, c))
    return ops.reshape(out, (p, c)) if squeeze else out


def dense_attention(q, k, v, heads):
    """Global multi-head attention over all tokens (window = whole grid)."""
    p = q.shape[-2]
    return window_attention(q, k, v, (1, p), (1, p), heads)


def group_channel_attention(q, k, v, groups):
    """Single-head attention between channels, within channel groups.

    Per group the ``C_g x C_g`` map ``softmax(Q^T K / sqrt(C_g))`` mixes the
    transposed value tokens; results are transposed back and regrouped.
    """
    squeeze, (q, k, v) = _batched(q, k, v)
    n, p, c = q.shape
    if c % groups:
        raise ConfigError("group_channels", f"{c} channels not divisible into {groups} groups")
    cg = c // groups

    def split(t):  # N x groups x C_g x P  (transposed tokens)
        return ops.transpose(ops.reshape(t, (n, p, groups, cg)), (0, 2, 3, 1))

    qt, kt, vt = split(q), split(k), split(v)
    scores = ops.matmul(qt, ops.swapaxes(kt, -1, -2), kind="attn_qk") * (1.0 / math.sqrt(cg))
    attn = ops.softmax(scores, axis=-1)
    out = ops.matmul(attn, vt, kind="attn_av")  # N x groups x C_g x P
    out = ops.reshape(ops.transpose(out, (0, 3, 1, 2)), (n, p, c))
    return ops.reshape(out, (p, c)) if squeeze else out


# ---------------------------------------------------------------------------
# branches


class _QKV(Module):
    def __init__(self, channels, rng, dtype):
        self.qkv = Linear(channels, 3 * channels, rng, dtype=dtype)
        self.qkv.kind = "qkv"

    def project(self, x):
        return ops.split(self.qkv(x), 3, axis=-1)


class WindowAttention(_QKV):
    """CMSA branch: learned Q/K/V then windowed multi-head attention."""

    def __init__(self, cfg, rng, dtype=DEFAULT_DTYPE):
        super().__init__(cfg.channels, rng, dtype)
        self.heads = cfg.heads
        self.window = cfg.window

    def forward(self, x, grid):
        q, k, v = self.project(x)
        return window_attention(q, k, v, grid, self.window, self.heads)


class DenseAttention(_QKV):
    """Plain global self-attention branch (ablation baseline)."""

    def __init__(self, cfg, rng, dtype=DEFAULT_DTYPE):
        super().__init__(cfg.channels, rng, dtype)
        self.heads = cfg.heads

    def forward(self, x, grid):
        q, k, v = self.project(x)
        return dense_attention(q, k, v, self.heads)


class ChannelAttention(_QKV):
    """MFSA branch: learned Q/K/V then grouped channel attention."""

    def __init__(self, cfg, rng, dtype=DEFAULT_DTYPE):
        super().__init__(cfg.channels, rng, dtype)
        self.groups = cfg.groups

    def forward(self, x, grid):
        q, k, v = self.project(x)
        return group_channel_attention(q, k, v, self.groups)


class ConvBranch(Module):
    """3x3 conv + ReLU on the token grid (all-convolution ablation)."""

    def __init__(self, cfg, rng, dtype=DEFAULT_DTYPE):
        self.conv = Conv2d(cfg.channels, cfg.channels, 3, rng, dtype=dtype)

    def forward(self, x, grid):
        return map_to_tokens(ops.relu(self.conv(tokens_to_map(x, grid))))


BRANCHES = {"cmsa": WindowAttention, "mfsa": ChannelAttention, "sa": DenseAttention, "conv": ConvBranch}


# ---------------------------------------------------------------------------
# detail compensation


class DCC(Module):
    """Spatial gate from channel statistics.

    ``[max_c, mean_c]`` -> 7x7 conv -> sigmoid gives an initial map that
    reweights the input; two 3x3 convs (ReLU between) and a final sigmoid
    reduce it to an ``N x 1 x H x W`` map in (0, 1).
    """

    def __init__(self, channels, rng, hidden=None, dtype=DEFAULT_DTYPE):
        hidden = hidden or max(1, channels // 4)
        self.spatial = Conv2d(2, 1, 7, rng, dtype=dtype)
        self.conv1 = Conv2d(channels, hidden, 3, rng, dtype=dtype)
        self.conv2 = Conv2d(hidden, 1, 3, rng, dtype=dtype)

    def forward(self, x):
        pooled = ops.concat([ops.pool_channel_max(x), ops.pool_channel_avg(x)], axis=-3)
        initial = ops.sigmoid(self.spatial(pooled))
        h = ops.relu(self.conv1(x * initial))
        return ops.sigmoid(self.conv2(h))


# ---------------------------------------------------------------------------
# composed blocks


class ViTDualSA(Module):
    """Two parallel attention branches gated by one shared DCC map, merged
    2C -> C per token, with pre-norm residual and a GELU MLP."""

    def __init__(self, cfg: BlockConfig, rng, dtype=DEFAULT_DTYPE):
        c = cfg.channels
        self.cfg = cfg
        self.norm1 = LayerNorm(c, dtype=dtype)
        self.branches = [BRANCHES[kind](cfg, rng, dtype=dtype) for kind in cfg.branches]
        self.dcc = DCC(c, rng, hidden=cfg.dcc_hidden, dtype=dtype) if any(cfg.dcc) else None
        self.merge = Linear(2 * c, c, rng, dtype=dtype)
        self.merge.kind = "merge"
        self.norm2 = LayerNorm(c, dtype=dtype)
        self.fc1 = Linear(c, cfg.mlp_ratio * c, rng, dtype=dtype)
        self.fc2 = Linear(cfg.mlp_ratio * c, c, rng, dtype=dtype)
        self.fc1.kind = self.fc2.kind = "mlp"

    def gate(self, x, grid):
        """DCC map for tokens ``x`` reshaped to ``N x P x 1``."""
        g = self.dcc(tokens_to_map(x, grid))
        return ops.reshape(g, (g.shape[0], grid[0] * grid[1], 1))

    def mix(self, x, grid, gate=None):
        """Merged, gated dual-branch output (the residual increment)."""
        h = self.norm1(x)
        if gate is None and self.dcc is not None:
            gate = self.gate(x, grid)
        outs = []
        for branch, gated in zip(self.branches, self.cfg.dcc):
            y = branch(h, grid)
            if gated and gate is not None:
                y = y * gate
            outs.append(y)
        return self.merge(ops.concat(outs, axis=-1))

    def forward(self, x, grid, gate=None):
        x = x + self.mix(x, grid, gate)
        return x + self.fc2(ops.gelu(self.fc1(self.norm2(x))))


class PatchEmbed(Module):
    """3x3 stride-2 conv to tokens plus a learned positional embedding."""

    def __init__(self, c_in, c_out, grid, rng, dtype=DEFAULT_DTYPE):
        self.proj = Conv2d(c_in, c_out, 3, rng, stride=2, padding=1, dtype=dtype)
        self.grid = tuple(grid)
        self.pos = Parameter(trunc_normal(rng, (1, grid[0] * grid[1], c_out), dtype=dtype))

    def forward(self, x):
        h, w = x.shape[-2:]
        if h % 2 or w % 2:
            raise ValueError(f"patch embedding needs even spatial dims, got {h}x{w}")
        y = self.proj(x)
        grid = y.shape[-2:]
        if tuple(grid) != self.grid:
            raise ValueError(f"input gives a {grid} token grid; block was built for {self.grid}")
        return TokenMap(map_to_tokens(y) + self.pos, tuple(grid), self.pos)


class CcViTDA(Module):
    """Patch embedding (halves resolution) followed by the dual-attention block."""

    def __init__(self, c_in, cfg: BlockConfig, grid, rng, dtype=DEFAULT_DTYPE):
        cfg.check_grid(grid)
        self.cfg = cfg
        self.embed = PatchEmbed(c_in, cfg.channels, grid, rng, dtype=dtype)
        self.block = ViTDualSA(cfg, rng, dtype=dtype)

    def forward(self, x):
        squeeze = x.ndim == 3
        if squeeze:
            x = ops.reshape(x, (1,) + x.shape)
        tm = self.embed(x)
        y = tokens_to_map(self.block(tm.tokens, tm.grid), tm.grid)
        return ops.reshape(y, y.shape[1:]) if squeeze else y


def init_zero(module):
    """Set every parameter of ``module`` to zero (test helper for neutral cases)."""
    for p in module.parameters():
        p.data[...] = 0
    return module


__all__ = [
    "CcViTDA",
    "ChannelAttention",
    "ConvBranch",
    "DCC",
    "DenseAttention",
    "PatchEmbed",
    "ViTDualSA",
    "WindowAttention",
    "dense_attention",
    "group_channel_attention",
    "init_zero",
    "map_to_tokens",
    "tokens_to_map",
    "window_attention",
]
