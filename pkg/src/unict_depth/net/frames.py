"""Depth frames, validity masks, and the masked L1 + L2 training loss."""

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, ops

MAX_DEPTH = 80.0


def valid_mask(depth, max_depth=MAX_DEPTH):
    """Finite ground-truth pixels in ``(0, max_depth]``."""
    depth = np.asarray(depth)
    with np.errstate(invalid="ignore"):
        return np.isfinite(depth) & (depth > 0) & (depth <= max_depth)


@dataclass
class DepthFrame:
    depth: np.ndarray  # 1 x H x W (or H x W), meters
    mask: np.ndarray  # H x W bool

    def __post_init__(self):
        self.depth = np.asarray(self.depth)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.depth.shape[-2:]:
            raise ValueError(f"mask {self.mask.shape} does not match depth {self.depth.shape}")

    @classmethod
    def from_ground_truth(cls, depth, max_depth=MAX_DEPTH):
        depth = np.asarray(depth)
        return cls(depth, valid_mask(depth, max_depth).reshape(depth.shape[-2:]))


def depth_loss(pred, gt, mask, weights=(1.0, 1.0)):
    """``mean over valid pixels of w1*|R| + w2*R^2`` with ``R = gt - pred``.

    ``pred`` is a :class:`Tensor`; ``gt``/``mask`` arrays broadcastable to it.
    Values of ``gt`` and ``pred`` at masked-out pixels never reach the result.
    """
    m = np.broadcast_to(np.asarray(mask, dtype=bool), pred.shape)
    n = int(m.sum())
    if n == 0:
        raise ValueError("depth loss needs at least one valid pixel")
    gt = np.where(m, np.broadcast_to(gt, pred.shape), 0.0).astype(pred.dtype)
    mf = Tensor(m.astype(pred.dtype))
    r = (Tensor(gt) - pred) * mf
    w1, w2 = weights
    total = ops.sum(ops.abs(r) * w1 + r * r * w2)
    return total * (1.0 / n)


def frame_loss(pred: DepthFrame, gt: DepthFrame, weights=(1.0, 1.0)):
    """Scalar loss between two :class:`DepthFrame` (masked by ``gt``)."""
    p = Tensor(np.asarray(pred.depth, dtype=np.float64))
    return float(depth_loss(p, gt.depth, gt.mask, weights).data)
