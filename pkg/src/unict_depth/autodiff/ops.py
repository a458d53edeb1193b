"""Differentiable operations on :class:`Tensor`.

Feature maps are channels-first; a leading batch axis is allowed everywhere
(``N x C x H x W`` for convolutions, ``... x P x C`` for token maps).
"""

import builtins
import math

import numpy as np

from .. import kernels
from . import counter
from .tensor import Tensor, as_tensor, make_result

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _wrap(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype), dtype=like.dtype)


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    a = as_tensor(a) if isinstance(a, Tensor) else _wrap(a, b)
    b = _wrap(b, a)
    sa, sb = a.shape, b.shape
    return make_result(
        a.data + b.data,
        (a, b),
        lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)),
        "add",
    )


def sub(a, b):
    a = as_tensor(a) if isinstance(a, Tensor) else _wrap(a, b)
    b = _wrap(b, a)
    sa, sb = a.shape, b.shape
    return make_result(
        a.data - b.data,
        (a, b),
        lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)),
        "sub",
    )


def mul(a, b):
    a = as_tensor(a) if isinstance(a, Tensor) else _wrap(a, b)
    b = _wrap(b, a)
    ad, bd = a.data, b.data

    def backward(g):
        return (
            unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
            unbroadcast(g * ad, bd.shape) if b.requires_grad else None,
        )

    return make_result(ad * bd, (a, b), backward, "mul")


def div(a, b):
    a = as_tensor(a) if isinstance(a, Tensor) else _wrap(a, b)
    b = _wrap(b, a)
    ad, bd = a.data, b.data

    def backward(g):
        return (
            unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
            unbroadcast(-g * ad / (bd * bd), bd.shape) if b.requires_grad else None,
        )

    return make_result(ad / bd, (a, b), backward, "div")


def neg(a):
    return make_result(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, exponent):
    exponent = float(exponent)
    ad = a.data
    return make_result(
        ad**exponent,
        (a,),
        lambda g: (g * exponent * ad ** (exponent - 1.0),),
        "power",
    )


def exp(a):
    out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    ad = a.data
    return make_result(np.log(ad), (a,), lambda g: (g / ad,), "log")


def abs(a):
    ad = a.data
    return make_result(np.abs(ad), (a,), lambda g: (g * np.sign(ad),), "abs")


def relu(a):
    mask = a.data > 0
    return make_result(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def sigmoid(a):
    out = _sigmoid(a.data)
    return make_result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def _sigmoid(x):
    # split on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softplus(a):
    x = a.data
    out = np.logaddexp(0.0, x).astype(x.dtype, copy=False)
    return make_result(out, (a,), lambda g: (g * _sigmoid(x),), "softplus")


def gelu(a):
    """GELU, tanh approximation."""
    x = a.data
    inner = _SQRT_2_OVER_PI * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _SQRT_2_OVER_PI * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return make_result(out, (a,), backward, "gelu")


def softmax(a, axis=-1):
    x = a.data
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    out = z / z.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (a,), backward, "softmax")


# ---------------------------------------------------------------------------
# reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None, keepdims=False):
    shape = a.shape
    axes = _norm_axis(axis, a.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return make_result(np.asarray(a.data.sum(axis=axes, keepdims=keepdims)), (a,), backward, "sum")


def mean(a, axis=None, keepdims=False):
    axes = _norm_axis(axis, a.ndim)
    n = 1
    for ax in axes:
        n *= a.shape[ax]
    shape = a.shape

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, shape).copy(),)

    return make_result(np.asarray(a.data.mean(axis=axes, keepdims=keepdims)), (a,), backward, "mean")


def max(a, axis=None, keepdims=False):
    """Max reduction; ties share the gradient equally."""
    axes = _norm_axis(axis, a.ndim)
    x = a.data
    out_k = x.max(axis=axes, keepdims=True)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        mask = x == out_k
        return (mask * (g / mask.sum(axis=axes, keepdims=True)),)

    out = out_k if keepdims else np.squeeze(out_k, axis=axes)
    return make_result(np.asarray(out), (a,), backward, "max")


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a, shape):
    old = a.shape
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_result(
        np.ascontiguousarray(a.data.transpose(axes)),
        (a,),
        lambda g: (g.transpose(inv),),
        "transpose",
    )


def swapaxes(a, ax1, ax2):
    axes = list(range(a.ndim))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, axes)


def getitem(a, index):
    shape = a.shape

    def backward(g):
        out = np.zeros(shape, dtype=g.dtype)
        if _is_advanced(index):
            np.add.at(out, index, g)
        else:
            out[index] = g
        return (out,)

    return make_result(np.array(a.data[index]), (a,), backward, "getitem")


def _is_advanced(index):
    if not isinstance(index, tuple):
        index = (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in index)


def concat(tensors, axis=0):
    tensors = list(tensors)
    arrays = [t.data for t in tensors]
    bounds = np.cumsum([x.shape[axis] for x in arrays])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_result(np.concatenate(arrays, axis=axis), tensors, backward, "concat")


def split(a, sections, axis=-1):
    """Split into ``sections`` equal parts along ``axis``."""
    n = a.shape[axis]
    if n % sections:
        raise ValueError(f"cannot split axis of size {n} into {sections} parts")
    step = n // sections
    ax = axis % a.ndim
    parts = []
    for i in range(sections):
        idx = [slice(None)] * a.ndim
        idx[ax] = slice(i * step, (i + 1) * step)
        parts.append(getitem(a, tuple(idx)))
    return parts


def window_partition(x, win_h, win_w):
    """``N x Gh x Gw x C`` -> ``(N*nW) x (win_h*win_w) x C`` in raster window order."""
    n, gh, gw, c = x.shape
    if gh % win_h or gw % win_w:
        raise ValueError(f"grid {gh}x{gw} is not divisible by window {win_h}x{win_w}")
    x = reshape(x, (n, gh // win_h, win_h, gw // win_w, win_w, c))
    x = transpose(x, (0, 1, 3, 2, 4, 5))
    return reshape(x, (n * (gh // win_h) * (gw // win_w), win_h * win_w, c))


def window_merge(windows, win_h, win_w, gh, gw):
    """Inverse of :func:`window_partition`."""
    nw = (gh // win_h) * (gw // win_w)
    n = windows.shape[0] // nw
    c = windows.shape[-1]
    x = reshape(windows, (n, gh // win_h, gw // win_w, win_h, win_w, c))
    x = transpose(x, (0, 1, 3, 2, 4, 5))
    return reshape(x, (n, gh, gw, c))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b, kind="matmul"):
    ad, bd = a.data, b.data
    if ad.shape[-1] != bd.shape[-2 if bd.ndim > 1 else 0]:
        raise ValueError(f"matmul shape mismatch: {ad.shape} @ {bd.shape}")
    out = np.matmul(ad, bd)
    if counter.counting():
        counter.record(kind, out.size * ad.shape[-1])

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape)
        if b.requires_grad:
            gb = unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape)
        return ga, gb

    return make_result(out, (a, b), backward, "matmul")


def linear(x, weight, bias=None, kind="linear"):
    """``x @ weight + bias`` with ``weight`` stored as ``in x out``."""
    y = matmul(x, weight, kind=kind)
    return y if bias is None else add(y, bias)


# ---------------------------------------------------------------------------
# normalisation


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalise over the last axis."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    n = xd.shape[-1]

    def backward(g):
        gx = gg = gb = None
        if gamma.requires_grad:
            gg = unbroadcast(g * xhat, gamma.shape)
        if beta.requires_grad:
            gb = unbroadcast(g, beta.shape)
        if x.requires_grad:
            gh = g * gamma.data
            gx = inv / n * (n * gh - gh.sum(axis=-1, keepdims=True) - xhat * (gh * xhat).sum(axis=-1, keepdims=True))
        return gx, gg, gb

    return make_result(out, (x, gamma, beta), backward, "layer_norm")


def group_norm(x, groups, gamma, beta, eps=1e-5):
    """GroupNorm over ``N x C x H x W``; ``gamma``/``beta`` have shape ``C``."""
    xd = x.data
    n, c = xd.shape[:2]
    if c % groups:
        raise ValueError(f"{c} channels not divisible into {groups} groups")
    xg = xd.reshape(n, groups, -1)
    mu = xg.mean(axis=-1, keepdims=True)
    xc = xg - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).reshape(xd.shape)
    bshape = (1, c) + (1,) * (xd.ndim - 2)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)
    m = xg.shape[-1]
    red = (0,) + tuple(range(2, xd.ndim))

    def backward(g):
        gx = gg = gb = None
        if gamma.requires_grad:
            gg = (g * xhat).sum(axis=red)
        if beta.requires_grad:
            gb = g.sum(axis=red)
        if x.requires_grad:
            gh = (g * gamma.data.reshape(bshape)).reshape(n, groups, -1)
            xh = xhat.reshape(n, groups, -1)
            gx = inv / m * (m * gh - gh.sum(axis=-1, keepdims=True) - xh * (gh * xh).sum(axis=-1, keepdims=True))
            gx = gx.reshape(xd.shape)
        return gx, gg, gb

    return make_result(out, (x, gamma, beta), backward, "group_norm")


# ---------------------------------------------------------------------------
# convolution


def conv_output_size(size, kernel, stride, padding):
    out = (size + 2 * padding - kernel) // stride + 1
    if out < 1:
        raise ValueError(f"kernel {kernel} does not fit input {size} with padding {padding}")
    return out


def _im2col(xp, kh, kw, stride, ho, wo):
    """``N x C x Hp x Wp`` (padded) -> ``N x Ho x Wo x (C*kh*kw)`` contiguous."""
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, ho, wo, c, kh, kw),
        strides=(sn, sh * stride, sw * stride, sc, sh, sw),
        writeable=False,
    )
    return view.reshape(n, ho, wo, c * kh * kw)


def _conv_forward(x, w, stride, padding):
    n, c, h, wd = x.shape
    co, ci, kh, kw = w.shape
    if ci != c:
        raise ValueError(f"conv expects {ci} input channels, got {c}")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(wd, kw, stride, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    cols = _im2col(np.ascontiguousarray(xp), kh, kw, stride, ho, wo)
    wmat = w.reshape(co, -1)
    out = cols @ wmat.T  # N x Ho x Wo x Co
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2)), cols


def _conv_backward_input(g, w, in_shape, stride, padding):
    """Adjoint of :func:`_conv_forward` w.r.t. its input."""
    n, ci, h, wd = in_shape
    co, _, kh, kw = w.shape
    ho, wo = g.shape[2:]
    gm = g.transpose(0, 2, 3, 1)  # N x Ho x Wo x Co
    dcols = gm @ w.reshape(co, -1)  # N x Ho x Wo x (Ci*kh*kw)
    dcols = dcols.reshape(n, ho, wo, ci, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    hp = builtins.max(h + 2 * padding, (ho - 1) * stride + kh)
    wp = builtins.max(wd + 2 * padding, (wo - 1) * stride + kw)
    dxp = np.zeros((n, ci, hp, wp), dtype=g.dtype)
    kernels.col2im(dcols, dxp, stride)
    return dxp[:, :, padding : padding + h, padding : padding + wd]


def _conv_backward_weight(cols, g, w_shape):
    co = w_shape[0]
    gm = g.transpose(0, 2, 3, 1).reshape(-1, co)
    return (gm.T @ cols.reshape(gm.shape[0], -1)).reshape(w_shape)


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation; ``x`` is ``C x H x W`` or ``N x C x H x W``,
    ``weight`` is ``C_out x C_in x k x k``."""
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    wd = weight.data
    out, cols = _conv_forward(xd, wd, stride, padding)
    if bias is not None:
        out += bias.data.reshape(1, -1, 1, 1)
    if counter.counting():
        counter.record("conv", out.size * wd[0].size)
    in_shape = xd.shape

    def backward(g):
        g4 = g[None] if squeeze else g
        gx = gw = gb = None
        if x.requires_grad:
            gx = _conv_backward_input(g4, wd, in_shape, stride, padding)
            gx = gx[0] if squeeze else gx
        if weight.requires_grad:
            gw = _conv_backward_weight(cols, g4, wd.shape)
        if bias is not None and bias.requires_grad:
            gb = g4.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out[0] if squeeze else out, parents, backward, "conv2d")


def conv_transpose2d(x, weight, bias=None, stride=2, padding=1, output_padding=1):
    """Transposed convolution; ``weight`` is ``C_in x C_out x k x k``.

    Output size is ``(H - 1) * stride - 2 * padding + k + output_padding``,
    which is exactly ``2H`` for the default stride 2, kernel 3.
    """
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    wd = weight.data
    n, ci, h, w = xd.shape
    if wd.shape[0] != ci:
        raise ValueError(f"deconv expects {wd.shape[0]} input channels, got {ci}")
    k = wd.shape[2]
    if output_padding >= stride and output_padding >= 1:
        raise ValueError("output_padding must be smaller than stride")
    ho = (h - 1) * stride - 2 * padding + k + output_padding
    wo = (w - 1) * stride - 2 * padding + k + output_padding
    if ho < 1 or wo < 1:
        raise ValueError("invalid transposed-convolution geometry")
    out_shape = (n, wd.shape[1], ho, wo)
    out = _conv_backward_input(xd, wd, out_shape, stride, padding)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)
    else:
        out = np.ascontiguousarray(out)
    if counter.counting():
        counter.record("deconv", xd.size * wd.shape[1] * k * k)

    def backward(g):
        g4 = g[None] if squeeze else g
        gx = gw = gb = None
        # the adjoint of a transposed conv is the ordinary conv
        gconv, cols = _conv_forward(g4, wd, stride, padding)
        if x.requires_grad:
            gx = gconv[:, :, :h, :w]
            gx = gx[0] if squeeze else gx
        if weight.requires_grad:
            gw = _conv_backward_weight(cols[:, :h, :w], xd, wd.shape)
        if bias is not None and bias.requires_grad:
            gb = g4.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out[0] if squeeze else out, parents, backward, "conv_transpose2d")


# ---------------------------------------------------------------------------
# pooling over channels


def pool_channel_max(x):
    """Per-pixel max over the channel axis (``-3``); keeps a size-1 channel."""
    return max(x, axis=x.ndim - 3, keepdims=True)


def pool_channel_avg(x):
    """Per-pixel mean over the channel axis (``-3``); keeps a size-1 channel."""
    return mean(x, axis=x.ndim - 3, keepdims=True)
