"""Hot inner loops, each with a numba kernel and a pure-numpy fallback.

Public entry points dispatch on :func:`unict_depth._accel.numba_enabled`.
Both paths implement the same arithmetic in the same order per output
element, so results agree up to floating-point reassociation of sums.
"""

import numpy as np

from ._accel import njit, numba_enabled

# ---------------------------------------------------------------------------
# voxel grid accumulation


@njit(cache=True)
def _voxel_accumulate_nb(grid, xs, ys, tstar, ps):
    nbins = grid.shape[0]
    for i in range(xs.shape[0]):
        t = tstar[i]
        lo = int(np.floor(t))
        for b in (lo, lo + 1):
            if b < 0 or b >= nbins:
                continue
            w = 1.0 - abs(b - t)
            if w > 0.0:
                grid[b, ys[i], xs[i]] += ps[i] * w


def _voxel_accumulate_np(grid, xs, ys, tstar, ps):
    nbins = grid.shape[0]
    lo = np.floor(tstar).astype(np.int64)
    for b in (lo, lo + 1):
        w = np.maximum(0.0, 1.0 - np.abs(b - tstar))
        keep = (b >= 0) & (b < nbins) & (w > 0.0)
        np.add.at(grid, (b[keep], ys[keep], xs[keep]), ps[keep] * w[keep])


def voxel_accumulate(grid, xs, ys, tstar, ps):
    """Scatter ``p * max(0, 1 - |b - t*|)`` into ``grid[b, y, x]`` in place."""
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    tstar = np.asarray(tstar, dtype=np.float64)
    ps = np.asarray(ps, dtype=np.float64)
    if numba_enabled():
        _voxel_accumulate_nb(grid, xs, ys, tstar, ps)
    else:
        _voxel_accumulate_np(grid, xs, ys, tstar, ps)
    return grid


# ---------------------------------------------------------------------------
# log-intensity threshold crossings between two frames


@njit(cache=True)
def _threshold_crossings_nb(ref, log0, log1, t0, t1, theta):
    h, w = ref.shape
    # first pass: count, on a copy so the second pass replays identical steps
    count = 0
    for y in range(h):
        for x in range(w):
            r = ref[y, x]
            a = log0[y, x]
            b = log1[y, x]
            if b > a:
                while b - r >= theta:
                    r += theta
                    count += 1
            elif b < a:
                while r - b >= theta:
                    r -= theta
                    count += 1
    ts = np.empty(count, np.float64)
    xs = np.empty(count, np.int64)
    ys = np.empty(count, np.int64)
    ps = np.empty(count, np.int64)
    k = 0
    dt = t1 - t0
    for y in range(h):
        for x in range(w):
            r = ref[y, x]
            a = log0[y, x]
            b = log1[y, x]
            if b > a:
                while b - r >= theta:
                    r += theta
                    ts[k] = t0 + (r - a) / (b - a) * dt
                    xs[k] = x
                    ys[k] = y
                    ps[k] = 1
                    k += 1
            elif b < a:
                while r - b >= theta:
                    r -= theta
                    ts[k] = t0 + (r - a) / (b - a) * dt
                    xs[k] = x
                    ys[k] = y
                    ps[k] = -1
                    k += 1
            ref[y, x] = r
    return ts, xs, ys, ps


def _threshold_crossings_np(ref, log0, log1, t0, t1, theta):
    up = log1 > log0
    down = log1 < log0
    dt = t1 - t0
    out_t, out_x, out_y, out_p = [], [], [], []
    # one sweep per crossing index; each pixel steps its reference exactly as
    # the scalar loop does
    while True:
        fire_up = up & (log1 - ref >= theta)
        fire_dn = down & (ref - log1 >= theta)
        if not (fire_up.any() or fire_dn.any()):
            break
        ref[fire_up] += theta
        ref[fire_dn] -= theta
        for mask, pol in ((fire_up, 1), (fire_dn, -1)):
            yy, xx = np.nonzero(mask)
            if yy.size == 0:
                continue
            r = ref[yy, xx]
            a = log0[yy, xx]
            b = log1[yy, xx]
            out_t.append(t0 + (r - a) / (b - a) * dt)
            out_x.append(xx)
            out_y.append(yy)
            out_p.append(np.full(yy.size, pol, dtype=np.int64))
    if not out_t:
        e = np.empty(0, np.int64)
        return np.empty(0, np.float64), e, e.copy(), e.copy()
    ts = np.concatenate(out_t)
    xs = np.concatenate(out_x).astype(np.int64)
    ys = np.concatenate(out_y).astype(np.int64)
    ps = np.concatenate(out_p)
    # match the kernel's pixel-major emission order
    order = np.lexsort((ts, xs, ys))
    return ts[order], xs[order], ys[order], ps[order]


def threshold_crossings(ref, log0, log1, t0, t1, theta):
    """Emit events for every threshold crossing while log intensity moves
    linearly from ``log0`` (time ``t0``) to ``log1`` (time ``t1``).

    ``ref`` holds the per-pixel reference level and is updated in place.
    Returns ``(t, x, y, p)`` arrays in pixel-major order.
    """
    if numba_enabled():
        return _threshold_crossings_nb(ref, log0, log1, float(t0), float(t1), float(theta))
    return _threshold_crossings_np(ref, log0, log1, float(t0), float(t1), float(theta))


# ---------------------------------------------------------------------------
# col2im: scatter-add im2col gradients back onto the padded input


@njit(cache=True)
def _col2im_nb(cols, out, stride):
    n, c, kh, kw, ho, wo = cols.shape
    for a in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    for y in range(ho):
                        yy = i + y * stride
                        for x in range(wo):
                            out[a, ch, yy, j + x * stride] += cols[a, ch, i, j, y, x]


def _col2im_np(cols, out, stride):
    _, _, kh, kw, ho, wo = cols.shape
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]


def col2im(cols, out, stride):
    """Accumulate ``cols[n, c, i, j, y, x]`` into ``out[n, c, i + s*y, j + s*x]``."""
    if numba_enabled():
        _col2im_nb(np.ascontiguousarray(cols), out, int(stride))
    else:
        _col2im_np(cols, out, int(stride))
    return out
