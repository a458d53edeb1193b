"""Run configuration and model checkpoints."""

import json
import logging
from dataclasses import dataclass, field, fields

import numpy as np

from .attention.config import ConfigError
from .autodiff import checkpoint
from .net import NetConfig, UniCTDepth

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
DTYPES = {"float32": np.float32, "float64": np.float64}
META_KEY = "meta.config"


@dataclass
class RunConfig:
    """Everything a training run needs besides the data itself.

    Defaults follow the reference schedule: 50 epochs, batch 16, AdamW at
    2e-4 halved after epochs 10, 20 and 30.
    """

    net: NetConfig = field(default_factory=NetConfig)
    dataset: str = ""
    val_dataset: str = None
    val_fraction: float = 0.2
    epochs: int = 50
    batch_size: int = 16
    lr: float = 2e-4
    milestones: list = field(default_factory=lambda: [10, 20, 30])
    gamma: float = 0.5
    weight_decay: float = 1e-2
    seed: int = 0
    out_dir: str = "run"
    dtype: str = "float32"

    def __post_init__(self):
        self.milestones = list(self.milestones)
        self.validate()

    def validate(self):
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        need(isinstance(self.net, NetConfig), "net", "must be a network config object")
        need(isinstance(self.epochs, int) and self.epochs >= 1, "epochs", "must be an integer >= 1")
        need(isinstance(self.batch_size, int) and self.batch_size >= 1, "batch_size", "must be an integer >= 1")
        need(self.lr >= 0, "lr", "must be non-negative")
        need(all(isinstance(m, int) for m in self.milestones), "milestones", "must be integers")
        need(
            all(b > a for a, b in zip(self.milestones, self.milestones[1:])), "milestones", "must be strictly increasing"
        )
        need(0 < self.gamma <= 1, "gamma", "must be in (0, 1]")
        need(self.weight_decay >= 0, "weight_decay", "must be non-negative")
        need(0 <= self.val_fraction < 1, "val_fraction", "must be in [0, 1)")
        need(self.dtype in DTYPES, "dtype", f"must be one of {sorted(DTYPES)}")

    @property
    def np_dtype(self):
        return DTYPES[self.dtype]

    def to_dict(self):
        d = {"version": CONFIG_VERSION}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = v.to_dict() if isinstance(v, NetConfig) else v
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        if "version" not in d:
            raise ConfigError("version", "required field missing")
        if d["version"] != CONFIG_VERSION:
            raise ConfigError("version", f"unsupported version {d['version']!r} (expected {CONFIG_VERSION})")
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in d.items():
            if key == "version":
                continue
            if key not in known:
                raise ConfigError(key, "unknown field")
            kwargs[key] = value
        if "net" in kwargs:
            if not isinstance(kwargs["net"], dict):
                raise ConfigError("net", "must be an object")
            kwargs["net"] = NetConfig.from_dict(kwargs["net"], path="net")
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError("<root>", str(exc)) from None

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def save_model(path, model):
    """Parameters plus the network config (as UTF-8 JSON bytes) in one container."""
    tensors = dict(model.state_dict())
    meta = json.dumps(model.cfg.to_dict(), sort_keys=True).encode("utf-8")
    tensors[META_KEY] = np.frombuffer(meta, dtype=np.uint8)
    checkpoint.save(path, tensors)


def load_model(path):
    tensors = checkpoint.load(path)
    if META_KEY not in tensors:
        raise checkpoint.CheckpointError(f"{path}: no network config stored")
    cfg = NetConfig.from_dict(json.loads(tensors.pop(META_KEY).tobytes().decode("utf-8")))
    dtype = next(iter(tensors.values())).dtype if tensors else np.float32
    model = UniCTDepth(cfg, dtype=dtype)
    model.load_state_dict(tensors)
    return model
