"""Parameter containers and the standard layers built on :mod:`ops`."""

import math

import numpy as np

from . import ops
from .tensor import DEFAULT_DTYPE, Parameter


class Module:
    """Base class; parameters and sub-modules are discovered from attributes
    (including lists of modules) in assignment order."""

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_parameters(self, prefix=""):
        seen = set()
        for name, value in vars(self).items():
            yield from _walk(value, prefix + name, seen)

    def modules(self):
        yield self
        for value in vars(self).values():
            for m in _iter_modules(value):
                yield from m.modules()

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def num_parameters(self):
        return int(sum(p.size for p in self.parameters()))

    def astype(self, dtype):
        """Cast every parameter in place; returns ``self``."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def state_dict(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise KeyError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, p in own.items():
            if name not in state:
                continue
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(arr.dtype, copy=True)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _iter_modules(value):
    if isinstance(value, Module):
        yield value
    elif isinstance(value, (list, tuple)):
        for v in value:
            yield from _iter_modules(v)


def _walk(value, name, seen):
    if isinstance(value, Parameter):
        if id(value) not in seen:
            seen.add(id(value))
            yield name, value
    elif isinstance(value, Module):
        for sub, v in vars(value).items():
            yield from _walk(v, f"{name}.{sub}", seen)
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            yield from _walk(v, f"{name}.{i}", seen)


# ---------------------------------------------------------------------------
# initialisers


def trunc_normal(rng, shape, std=0.02, dtype=DEFAULT_DTYPE):
    """Normal(0, std) truncated at two standard deviations (resampled)."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out.astype(dtype)


def kaiming_uniform(rng, shape, fan_in, dtype=DEFAULT_DTYPE):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


# ---------------------------------------------------------------------------
# layers


class Linear(Module):
    def __init__(self, in_features, out_features, rng, bias=True, dtype=DEFAULT_DTYPE):
        self.weight = Parameter(trunc_normal(rng, (in_features, out_features), dtype=dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None
        self.kind = "linear"

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias, kind=self.kind)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=1, padding=None, bias=True, dtype=DEFAULT_DTYPE):
        fan_in = c_in * kernel * kernel
        self.weight = Parameter(kaiming_uniform(rng, (c_out, c_in, kernel, kernel), fan_in, dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype)) if bias else None
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)

    def output_shape(self, h, w):
        k = self.weight.shape[2]
        return (
            ops.conv_output_size(h, k, self.stride, self.padding),
            ops.conv_output_size(w, k, self.stride, self.padding),
        )


class ConvTranspose2d(Module):
    """Stride-2, kernel-3 upsampler that exactly doubles spatial size."""

    def __init__(self, c_in, c_out, rng, kernel=3, stride=2, bias=True, dtype=DEFAULT_DTYPE):
        fan_in = c_in * kernel * kernel
        self.weight = Parameter(kaiming_uniform(rng, (c_in, c_out, kernel, kernel), fan_in, dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype)) if bias else None
        self.stride = stride
        self.padding = (kernel - 1) // 2
        self.output_padding = stride - 1 if kernel % 2 else 0

    def forward(self, x):
        return ops.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding, self.output_padding)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5, dtype=DEFAULT_DTYPE):
        self.weight = Parameter(np.ones(dim, dtype=dtype))
        self.bias = Parameter(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def forward(self, x):
        return ops.layer_norm(x, self.weight, self.bias, self.eps)


class GroupNorm(Module):
    def __init__(self, channels, groups=8, eps=1e-5, dtype=DEFAULT_DTYPE):
        groups = math.gcd(channels, groups)
        self.groups = groups
        self.weight = Parameter(np.ones(channels, dtype=dtype))
        self.bias = Parameter(np.zeros(channels, dtype=dtype))
        self.eps = eps

    def forward(self, x):
        return ops.group_norm(x, self.groups, self.weight, self.bias, self.eps)
