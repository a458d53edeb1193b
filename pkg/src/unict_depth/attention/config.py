"""Per-stage attention configuration and token maps."""

from dataclasses import asdict, dataclass, field
from typing import Optional

from ..autodiff import Tensor

BRANCH_KINDS = ("conv", "sa", "cmsa", "mfsa")

# ablation rows: (branch kinds, DCC gate per branch)
VARIANTS = {
    1: (("conv", "conv"), (False, False)),
    2: (("sa", "sa"), (False, False)),
    3: (("cmsa", "cmsa"), (False, False)),
    4: (("mfsa", "mfsa"), (False, False)),
    5: (("cmsa", "mfsa"), (False, False)),
    6: (("cmsa", "mfsa"), (True, False)),
    7: (("cmsa", "mfsa"), (False, True)),
    8: (("cmsa", "mfsa"), (True, True)),
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class BlockConfig:
    """Attention geometry for one CcViT-DA stage.

    ``window`` is in patches; ``group_channels`` is channels per MFSA group.
    """

    channels: int
    heads: int = 1
    window: tuple = (7, 7)
    group_channels: int = 16
    branches: tuple = ("cmsa", "mfsa")
    dcc: tuple = (True, True)
    mlp_ratio: int = 4
    dcc_hidden: Optional[int] = None

    def __post_init__(self):
        self.window = tuple(int(w) for w in self.window)
        self.branches = tuple(self.branches)
        self.dcc = tuple(bool(d) for d in self.dcc)
        if self.channels < 1:
            raise ConfigError("channels", "must be positive")
        if self.heads < 1 or self.channels % self.heads:
            raise ConfigError("heads", f"{self.channels} channels not divisible by {self.heads} heads")
        if self.group_channels < 1 or self.channels % self.group_channels:
            raise ConfigError(
                "group_channels", f"{self.channels} channels not divisible into groups of {self.group_channels}"
            )
        if len(self.window) != 2 or min(self.window) < 1:
            raise ConfigError("window", "must be two positive sizes")
        if len(self.branches) != 2 or any(b not in BRANCH_KINDS for b in self.branches):
            raise ConfigError("branches", f"expected two of {BRANCH_KINDS}")
        if len(self.dcc) != 2:
            raise ConfigError("dcc", "expected one flag per branch")
        if self.mlp_ratio < 1:
            raise ConfigError("mlp_ratio", "must be positive")

    @property
    def head_dim(self):
        return self.channels // self.heads

    @property
    def groups(self):
        return self.channels // self.group_channels

    @property
    def window_tokens(self):
        return self.window[0] * self.window[1]

    def n_windows(self, grid):
        self.check_grid(grid)
        return (grid[0] // self.window[0]) * (grid[1] // self.window[1])

    def check_grid(self, grid):
        gh, gw = grid
        if gh % self.window[0] or gw % self.window[1]:
            raise ConfigError("window", f"token grid {gh}x{gw} not divisible by window {self.window}")

    @classmethod
    def variant(cls, row, **kwargs):
        """Config for an ablation row 1..8 (8 is the full block)."""
        if row not in VARIANTS:
            raise ConfigError("variant", f"unknown ablation row {row}")
        branches, dcc = VARIANTS[row]
        return cls(branches=branches, dcc=dcc, **kwargs)

    def to_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        d["branches"] = list(self.branches)
        d["dcc"] = list(self.dcc)
        return d


def fit_window(grid, window):
    """Largest window not exceeding ``window`` that tiles ``grid`` per axis."""
    out = []
    for g, w in zip(grid, window):
        w = min(w, g)
        while g % w:
            w -= 1
        out.append(w)
    return tuple(out)


@dataclass
class TokenMap:
    """``N x P x C`` tokens laid out on a ``grid[0] x grid[1]`` patch grid."""

    tokens: Tensor
    grid: tuple
    pos_embed: Optional[Tensor] = field(default=None, repr=False)

    def __post_init__(self):
        if self.grid[0] * self.grid[1] != self.tokens.shape[-2]:
            raise ValueError(f"grid {self.grid} does not match {self.tokens.shape[-2]} tokens")

    @property
    def num_tokens(self):
        return self.tokens.shape[-2]

    @property
    def channels(self):
        return self.tokens.shape[-1]
