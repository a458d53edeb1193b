"""Multiply-accumulate counts for dense, windowed and channel-group attention.

Two routes: :func:`count_attention_macs` is closed-form shape arithmetic,
:func:`measure_attention_macs` runs the real branch modules under an
:class:`OpCounter`.  Both cover the Q/K/V projection plus the two attention
matmuls (scores and weighted values).
"""

import time

import numpy as np

from ..autodiff import OpCounter, Tensor, no_grad
from .blocks import ChannelAttention, DenseAttention, WindowAttention
from .config import BlockConfig, ConfigError

KINDS = ("dense", "cmsa", "mfsa")


def count_attention_macs(cfg: BlockConfig, num_tokens):
    """Exact MACs per branch kind for ``num_tokens`` tokens of width ``cfg.channels``."""
    p = int(num_tokens)
    c = cfg.channels
    pw = cfg.window_tokens
    if p % pw:
        raise ConfigError("window", f"{p} tokens do not split into windows of {pw}")
    proj = 3 * p * c * c
    per_kind = {
        "dense": p * p * c,
        "cmsa": (p // pw) * pw * pw * c,
        "mfsa": cfg.groups * cfg.group_channels**2 * p,
    }
    out = {}
    for kind, attn in per_kind.items():
        ctr = OpCounter()
        ctr.add("qkv", proj)
        ctr.add("attn_qk", attn)
        ctr.add("attn_av", attn)
        out[kind] = ctr
    return out


def _modules(cfg, rng):
    return {
        "dense": DenseAttention(cfg, rng),
        "cmsa": WindowAttention(cfg, rng),
        "mfsa": ChannelAttention(cfg, rng),
    }


def measure_attention_macs(cfg: BlockConfig, grid, seed=0, timings=False):
    """Run each branch once on random tokens; returns ``{kind: OpCounter}``
    (and ``{kind: seconds}`` when ``timings``)."""
    cfg.check_grid(grid)
    rng = np.random.default_rng(seed)
    mods = _modules(cfg, rng)
    x = Tensor(rng.standard_normal((1, grid[0] * grid[1], cfg.channels)).astype(np.float32))
    counts, seconds = {}, {}
    with no_grad():
        for kind, mod in mods.items():
            with OpCounter() as ctr:
                start = time.perf_counter()
                mod(x, grid)
                seconds[kind] = time.perf_counter() - start
            counts[kind] = ctr
    return (counts, seconds) if timings else counts


def scaling_ratios(cfg: BlockConfig, num_tokens):
    """``macs(2P) / macs(P)`` per branch kind."""
    lo = count_attention_macs(cfg, num_tokens)
    hi = count_attention_macs(cfg, 2 * num_tokens)
    return {k: hi[k].macs / lo[k].macs for k in KINDS}
