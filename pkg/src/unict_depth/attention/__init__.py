"""Windowed (CMSA) and channel-group (MFSA) attention, the DCC gate, and
their composition into the CcViT-DA encoder block."""

from .blocks import (
    DCC,
    CcViTDA,
    ChannelAttention,
    ConvBranch,
    DenseAttention,
    PatchEmbed,
    ViTDualSA,
    WindowAttention,
    dense_attention,
    group_channel_attention,
    init_zero,
    map_to_tokens,
    tokens_to_map,
    window_attention,
)
from .complexity import count_attention_macs, measure_attention_macs, scaling_ratios
from .config import VARIANTS, BlockConfig, ConfigError, TokenMap, fit_window

__all__ = [
    "BlockConfig",
    "CcViTDA",
    "ChannelAttention",
    "ConfigError",
    "ConvBranch",
    "DCC",
    "DenseAttention",
    "PatchEmbed",
    "TokenMap",
    "VARIANTS",
    "ViTDualSA",
    "WindowAttention",
    "count_attention_macs",
    "dense_attention",
    "fit_window",
    "group_channel_attention",
    "init_zero",
    "map_to_tokens",
    "measure_attention_macs",
    "scaling_ratios",
    "tokens_to_map",
    "window_attention",
]
