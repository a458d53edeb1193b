"""Depth evaluation metrics: cut-off average error, Abs Rel, RMSE log, delta accuracy.

All metrics average over valid ground-truth pixels (finite, in ``(0, 80]``
m, and inside the optional extra mask).  Per-frame results can be reduced
across a dataset with :class:`MetricAccumulator`, which sums ``(value, n)``
pairs rather than averaging averages.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

CUTOFFS = (10.0, 20.0, 30.0)
DELTA_BASE = 1.25
LOG_CLAMP = (0.01, 80.0)
MAX_DEPTH = 80.0


class EmptyMaskError(ValueError):
    pass


def _valid(gt, mask=None):
    gt = np.asarray(gt, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        m = np.isfinite(gt) & (gt > 0) & (gt <= MAX_DEPTH)
    if mask is not None:
        m &= np.broadcast_to(np.asarray(mask, dtype=bool), gt.shape)
    return m


def _select(pred, gt, mask):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    m = _valid(gt, mask)
    if not m.any():
        raise EmptyMaskError("no valid ground-truth pixels")
    return pred[m], gt[m]


def _positive(pred, what):
    if not np.all(pred > 0) or not np.all(np.isfinite(pred)):
        raise ValueError(f"{what} needs strictly positive, finite predictions")


def avg_error(pred, gt, cutoff, mask=None):
    """Mean ``|pred - gt|`` over valid pixels with ``gt <= cutoff`` (meters)."""
    p, g = _select(pred, gt, mask)
    keep = g <= cutoff
    if not keep.any():
        raise EmptyMaskError(f"no valid pixels within the {cutoff} m cut-off")
    return float(np.abs(p[keep] - g[keep]).mean())


def abs_rel(pred, gt, mask=None):
    p, g = _select(pred, gt, mask)
    _positive(p, "abs_rel")
    return float((np.abs(p - g) / g).mean())


def rmse_log(pred, gt, mask=None, clamp=LOG_CLAMP):
    """``sqrt(mean((ln pred - ln gt)^2))``; predictions clamped to ``clamp`` first."""
    p, g = _select(pred, gt, mask)
    if clamp is not None:
        p = np.clip(p, *clamp)
    _positive(p, "rmse_log")
    return float(np.sqrt(((np.log(p) - np.log(g)) ** 2).mean()))


def delta_acc(pred, gt, n=1, mask=None):
    """Fraction of valid pixels with ``max(pred/gt, gt/pred) < 1.25**n``."""
    p, g = _select(pred, gt, mask)
    _positive(p, "delta_acc")
    ratio = np.maximum(p / g, g / p)
    return float((ratio < DELTA_BASE**n).mean())


@dataclass
class MetricReport:
    avg_error: dict = field(default_factory=dict)  # cutoff (m) -> meters
    abs_rel: float = 0.0
    rmse_log: float = 0.0
    d1: float = 0.0
    d2: float = 0.0
    d3: float = 0.0
    n_valid: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["avg_error"] = {f"{k:g}": v for k, v in self.avg_error.items()}
        d["n_valid"] = {str(k): v for k, v in self.n_valid.items()}
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def table(self):
        """Aligned plain text: cut-off errors first, then the ratio metrics."""
        heads = [f"{c:g}m" for c in self.avg_error] + ["AbsRel", "RMSElog", "d<1.25", "d<1.25^2", "d<1.25^3"]
        vals = list(self.avg_error.values()) + [self.abs_rel, self.rmse_log, self.d1, self.d2, self.d3]
        width = max(9, *(len(h) + 1 for h in heads))
        top = "".join(h.rjust(width) for h in heads)
        row = "".join(("-" if v is None else f"{v:.3f}").rjust(width) for v in vals)
        return f"{top}\n{row}"


class MetricAccumulator:
    """Sums per-frame statistics so the final report weights every pixel equally."""

    def __init__(self, cutoffs=CUTOFFS):
        self.cutoffs = tuple(cutoffs)
        self.err_sum = {c: 0.0 for c in self.cutoffs}
        self.err_n = {c: 0 for c in self.cutoffs}
        self.rel_sum = 0.0
        self.log_sq_sum = 0.0
        self.delta_hits = [0, 0, 0]
        self.n = 0

    def add(self, pred, gt, mask=None):
        p, g = _select(pred, gt, mask)
        _positive(p, "metrics")
        for c in self.cutoffs:
            keep = g <= c
            self.err_sum[c] += float(np.abs(p[keep] - g[keep]).sum())
            self.err_n[c] += int(keep.sum())
        self.rel_sum += float((np.abs(p - g) / g).sum())
        lp = np.clip(p, *LOG_CLAMP)
        self.log_sq_sum += float(((np.log(lp) - np.log(g)) ** 2).sum())
        ratio = np.maximum(p / g, g / p)
        for i in range(3):
            self.delta_hits[i] += int((ratio < DELTA_BASE ** (i + 1)).sum())
        self.n += p.size
        return self

    def report(self):
        if self.n == 0:
            raise EmptyMaskError("no frames accumulated")
        return MetricReport(
            avg_error={c: (self.err_sum[c] / self.err_n[c] if self.err_n[c] else None) for c in self.cutoffs},
            abs_rel=self.rel_sum / self.n,
            rmse_log=float(np.sqrt(self.log_sq_sum / self.n)),
            d1=self.delta_hits[0] / self.n,
            d2=self.delta_hits[1] / self.n,
            d3=self.delta_hits[2] / self.n,
            n_valid={**{f"{c:g}m": self.err_n[c] for c in self.cutoffs}, "all": self.n},
        )


def evaluate(pred, gt, mask=None, cutoffs=CUTOFFS):
    """Single-frame :class:`MetricReport`."""
    return MetricAccumulator(cutoffs).add(pred, gt, mask).report()
