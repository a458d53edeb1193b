"""Event records, time windows, and voxel grids."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .. import kernels

# packed on-disk / in-memory layout of one event
EVENT_DTYPE = np.dtype([("t", "<f8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])

DEFAULT_BINS = 5


class EventRecord(NamedTuple):
    t: float
    x: int
    y: int
    p: int


def events_array(records=()):
    """Build a structured event array from an iterable of records/tuples."""
    return np.array([tuple(r) for r in records], dtype=EVENT_DTYPE)


@dataclass
class EventSlice:
    """Time-ordered events inside ``[t0, t0 + duration]``."""

    events: np.ndarray
    t0: float
    duration: float

    def __post_init__(self):
        self.events = np.asarray(self.events, dtype=EVENT_DTYPE)
        if self.duration <= 0:
            raise ValueError(f"window duration must be positive, got {self.duration}")

    def __len__(self):
        return len(self.events)

    @classmethod
    def empty(cls, t0, duration):
        return cls(np.empty(0, dtype=EVENT_DTYPE), t0, duration)


@dataclass
class VoxelGrid:
    """``B x H x W`` accumulation of one slice."""

    data: np.ndarray
    t0: float = 0.0
    duration: float = 1.0

    @property
    def bins(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]


def scale_timestamp(t, t0, duration, bins):
    """Map ``t`` in ``[t0, t0 + duration]`` linearly onto ``[0, bins - 1]``."""
    if duration <= 0:
        raise ValueError(f"window duration must be positive, got {duration}")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < t0) or np.any(t > t0 + duration):
        raise ValueError("timestamp outside the window")
    out = (bins - 1) * (t - t0) / duration
    return float(out) if out.ndim == 0 else out


def voxelize(slice_, height, width, bins=DEFAULT_BINS, dtype=np.float32):
    """Accumulate a slice into a ``bins x height x width`` grid.

    Each event adds ``p * max(0, 1 - |b - t*|)`` to bin ``b`` at its pixel, so
    at most the two bins bracketing ``t*`` receive weight.
    """
    ev = slice_.events
    grid = np.zeros((bins, height, width), dtype=np.float64)
    if len(ev):
        xs = ev["x"].astype(np.int64)
        ys = ev["y"].astype(np.int64)
        if xs.max() >= width or ys.max() >= height:
            raise ValueError(f"event coordinates exceed the {width}x{height} grid")
        tstar = scale_timestamp(ev["t"], slice_.t0, slice_.duration, bins)
        kernels.voxel_accumulate(grid, xs, ys, np.atleast_1d(tstar), ev["p"].astype(np.float64))
    return VoxelGrid(grid.astype(dtype), slice_.t0, slice_.duration)


def window_events(events, frame_times):
    """Split a sorted event array at frame timestamps.

    Slice ``k`` holds events in ``[frame[k], frame[k+1])``; the final slice
    also includes its end point.  Returns ``len(frame_times) - 1`` slices.
    """
    events = np.asarray(events, dtype=EVENT_DTYPE)
    frame_times = np.asarray(frame_times, dtype=np.float64)
    if np.any(np.diff(events["t"]) < 0):
        raise ValueError("event stream is not sorted by time")
    if np.any(np.diff(frame_times) <= 0):
        raise ValueError("frame timestamps must be strictly increasing")
    starts = np.searchsorted(events["t"], frame_times, side="left")
    last_end = np.searchsorted(events["t"], frame_times[-1], side="right")
    slices = []
    for k in range(len(frame_times) - 1):
        lo = starts[k]
        hi = last_end if k == len(frame_times) - 2 else starts[k + 1]
        t0 = frame_times[k]
        slices.append(EventSlice(events[lo:hi], t0, frame_times[k + 1] - t0))
    return slices
