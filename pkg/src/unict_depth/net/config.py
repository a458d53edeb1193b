"""Network layout configuration."""

import math
from dataclasses import dataclass, field, fields

from ..attention.config import VARIANTS, BlockConfig, ConfigError, fit_window

MODALITIES = ("fusion", "events", "image")


@dataclass
class NetConfig:
    """Full encoder-decoder layout.

    ``channels`` are the five encoder output widths (1/2 .. 1/32),
    ``heads`` the head counts of the four CcViT-DA stages.  ``variant`` picks
    the dual-attention ablation row (8 = CMSA + MFSA, both DCC-gated).
    """

    height: int = 224
    width: int = 224
    bins: int = 5
    image_channels: int = 3
    stem_channels: int = 32
    channels: list = field(default_factory=lambda: [64, 96, 192, 384, 768])
    heads: list = field(default_factory=lambda: [2, 4, 8, 16])
    window: int = 7
    group_channels: int = 16
    mlp_ratio: int = 4
    decoder_channels: list = None
    variant: int = 8
    modality: str = "fusion"
    loss_weights: list = field(default_factory=lambda: [1.0, 1.0])
    depth_scale: float = 10.0
    max_depth: float = 80.0
    norm_groups: int = 8
    seed: int = 0

    def __post_init__(self):
        self.channels = list(self.channels)
        self.heads = list(self.heads)
        self.loss_weights = [float(w) for w in self.loss_weights]
        if self.decoder_channels is None:
            self.decoder_channels = list(reversed(self.channels[:4])) + [self.stem_channels]
        self.decoder_channels = list(self.decoder_channels)
        self.validate()

    def validate(self):
        for name in ("height", "width"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 32 or v % 32:
                raise ConfigError(name, f"must be a positive multiple of 32, got {v!r}")
        if self.bins < 1:
            raise ConfigError("bins", "must be at least 1")
        if len(self.channels) != 5 or min(self.channels) < 1:
            raise ConfigError("channels", "expected five positive widths")
        if len(self.heads) != 4:
            raise ConfigError("heads", "expected four head counts")
        for i, (c, h) in enumerate(zip(self.channels[1:], self.heads)):
            if h < 1 or c % h:
                raise ConfigError(f"heads[{i}]", f"{c} channels not divisible by {h} heads")
        if len(self.decoder_channels) != 5 or min(self.decoder_channels) < 1:
            raise ConfigError("decoder_channels", "expected five positive widths")
        if self.variant not in VARIANTS:
            raise ConfigError("variant", f"must be one of {sorted(VARIANTS)}")
        if self.modality not in MODALITIES:
            raise ConfigError("modality", f"must be one of {MODALITIES}")
        if len(self.loss_weights) != 2 or min(self.loss_weights) < 0:
            raise ConfigError("loss_weights", "expected two non-negative weights")
        if self.window < 1 or self.group_channels < 1:
            raise ConfigError("window", "window and group_channels must be positive")
        if self.depth_scale <= 0 or self.max_depth <= 0:
            raise ConfigError("depth_scale", "must be positive")

    def stage_grid(self, stage):
        """Token grid of CcViT-DA stage ``stage`` (0..3): input / 4, 8, 16, 32."""
        f = 2 ** (stage + 2)
        return (self.height // f, self.width // f)

    def stage_configs(self):
        """Per-stage :class:`BlockConfig`, windows shrunk to tile each grid."""
        out = []
        for i in range(4):
            c = self.channels[i + 1]
            grid = self.stage_grid(i)
            out.append(
                BlockConfig.variant(
                    self.variant,
                    channels=c,
                    heads=self.heads[i],
                    window=fit_window(grid, (self.window, self.window)),
                    group_channels=math.gcd(c, self.group_channels),
                    mlp_ratio=self.mlp_ratio,
                )
            )
        return out

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d, path="net"):
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(f"{path}.{key}", "unknown field")
        try:
            return cls(**d)
        except ConfigError as exc:
            raise ConfigError(f"{path}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
        except TypeError as exc:
            raise ConfigError(path, str(exc)) from None


def toy_config(size=32, **overrides):
    """Small layout for tests and desk-scale training."""
    base = dict(
        height=size,
        width=size,
        stem_channels=8,
        channels=[8, 16, 16, 32, 32],
        heads=[2, 2, 4, 4],
        window=4,
        group_channels=8,
        mlp_ratio=2,
        norm_groups=4,
    )
    base.update(overrides)
    return NetConfig(**base)
