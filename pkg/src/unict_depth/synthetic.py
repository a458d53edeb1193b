"""Procedural scenes with analytic depth, rendered images, and simulated events.

A scene is a stack of textured fronto-parallel planes.  Each plane is an
axis-aligned rectangle (or the whole frame, for a background) translating at
a constant pixel velocity; the nearest covering plane wins at every pixel.
Brightness is attenuated with depth (``exp(-depth / fog)``) so images carry
a depth cue, and generated scenes move nearer planes faster so events carry
one too.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .events.stream import EVENT_DTYPE

LOG_EPS = 1e-3


@dataclass
class PlaneSpec:
    depth: float
    velocity: tuple = (0.0, 0.0)  # px/s
    frequency: float = 0.1  # cycles/px
    orientation: float = 0.0  # radians
    phase: float = 0.0
    amplitude: float = 0.3
    rect: Optional[tuple] = None  # (x0, y0, w, h) at t=0; None covers the frame

    def __post_init__(self):
        self.velocity = tuple(float(v) for v in self.velocity)
        if self.rect is not None:
            self.rect = tuple(float(v) for v in self.rect)


@dataclass
class SceneSpec:
    seed: int
    height: int
    width: int
    planes: list = field(default_factory=list)
    fps: float = 20.0
    threshold: float = 0.1
    fog: float = 20.0

    def __post_init__(self):
        self.planes = [p if isinstance(p, PlaneSpec) else PlaneSpec(**p) for p in self.planes]
        for p in self.planes:
            if not 1.0 <= p.depth <= 80.0:
                raise ValueError(f"plane depth {p.depth} outside [1, 80] m")
        if self.threshold <= 0:
            raise ValueError("contrast threshold must be positive")
        if self.fps <= 0:
            raise ValueError("frame rate must be positive")

    def frame_time(self, k):
        return k / self.fps

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def render_frame(spec: SceneSpec, k):
    """Intensity in ``[0, 1]`` and depth (meters) for frame ``k``."""
    t = spec.frame_time(k)
    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    cx, cy = xs + 0.5, ys + 0.5
    depth = np.full((spec.height, spec.width), np.inf)
    image = np.zeros((spec.height, spec.width))
    for plane in spec.planes:
        vx, vy = plane.velocity
        u, v = cx - vx * t, cy - vy * t
        if plane.rect is None:
            cover = np.ones_like(depth, dtype=bool)
        else:
            x0, y0, w, h = plane.rect
            cover = (u >= x0) & (u < x0 + w) & (v >= y0) & (v < y0 + h)
        win = cover & (plane.depth < depth)
        if not win.any():
            continue
        arg = 2 * math.pi * plane.frequency * (u * math.cos(plane.orientation) + v * math.sin(plane.orientation))
        tex = 0.5 + 0.5 * plane.amplitude * np.sin(arg + plane.phase)
        shade = tex * math.exp(-plane.depth / spec.fog)
        depth[win] = plane.depth
        image[win] = shade[win]
    return image, depth


def render_frames(spec: SceneSpec, n_frames):
    """``(images, depths)`` stacked as ``n x H x W`` float64 arrays.

    Pixels covered by no plane get depth ``inf`` (invalid) and intensity 0.
    """
    frames = [render_frame(spec, k) for k in range(n_frames)]
    images = np.stack([f[0] for f in frames])
    depths = np.stack([f[1] for f in frames])
    return images, depths


def simulate_events(spec: SceneSpec, images, times=None):
    """Threshold-crossing events between consecutive frames.

    Per pixel, log intensity is interpolated linearly in time between frames;
    an event fires each time it moves ``spec.threshold`` away from the
    pixel's reference level, which then steps by one threshold.  Returns a
    time-sorted structured array.
    """
    images = np.asarray(images, dtype=np.float64)
    if len(images) < 2:
        raise ValueError("need at least two frames to simulate events")
    if times is None:
        times = [spec.frame_time(k) for k in range(len(images))]
    logs = np.log(images + LOG_EPS)
    ref = logs[0].copy()
    chunks = []
    for k in range(1, len(images)):
        t, x, y, p = kernels.threshold_crossings(ref, logs[k - 1], logs[k], times[k - 1], times[k], spec.threshold)
        chunk = np.empty(len(t), dtype=EVENT_DTYPE)
        chunk["t"], chunk["x"], chunk["y"], chunk["p"] = t, x, y, p
        chunks.append(chunk[np.argsort(chunk["t"], kind="stable")])
    return np.concatenate(chunks) if chunks else np.empty(0, dtype=EVENT_DTYPE)


def random_scene(seed, height, width, n_planes=None, fps=20.0, threshold=0.1, static_background=True):
    """Random scene: a background plane plus 1-3 moving rectangles.

    Foreground speed falls off as ``1 / depth`` (motion parallax of a
    translating camera), texture frequency and orientation are random.
    """
    rng = np.random.default_rng(seed)
    n_planes = int(rng.integers(1, 4)) if n_planes is None else n_planes
    bg_depth = float(rng.uniform(20.0, 40.0))
    planes = [
        PlaneSpec(
            depth=bg_depth,
            velocity=(0.0, 0.0) if static_background else (60.0 / bg_depth, 0.0),
            frequency=float(rng.uniform(0.05, 0.15)),
            orientation=float(rng.uniform(0, math.pi)),
            phase=float(rng.uniform(0, 2 * math.pi)),
        )
    ]
    for _ in range(n_planes):
        d = float(rng.uniform(2.0, 15.0))
        speed = 120.0 / d
        ang = rng.uniform(0, 2 * math.pi)
        w = float(rng.uniform(0.25, 0.6) * width)
        h = float(rng.uniform(0.25, 0.6) * height)
        planes.append(
            PlaneSpec(
                depth=d,
                velocity=(speed * math.cos(ang), speed * math.sin(ang)),
                frequency=float(rng.uniform(0.05, 0.15)),
                orientation=float(rng.uniform(0, math.pi)),
                phase=float(rng.uniform(0, 2 * math.pi)),
                rect=(float(rng.uniform(0, width - w)), float(rng.uniform(0, height - h)), w, h),
            )
        )
    return SceneSpec(seed=int(seed), height=height, width=width, planes=planes, fps=fps, threshold=threshold)


# ---------------------------------------------------------------------------
# dataset layout on disk


def write_sequence(root, spec: SceneSpec, n_frames):
    """Write one sequence directory: images/, depth/, events.bin, timestamps.txt, spec.json."""
    from .events.io import write_binary
    from .imageio import write_pfm, write_pgm

    os.makedirs(os.path.join(root, "images"), exist_ok=True)
    os.makedirs(os.path.join(root, "depth"), exist_ok=True)
    images, depths = render_frames(spec, n_frames)
    events = simulate_events(spec, images)
    for k in range(n_frames):
        write_pgm(os.path.join(root, "images", f"{k:06d}.pgm"), np.round(images[k] * 255).astype(np.uint8))
        write_pfm(os.path.join(root, "depth", f"{k:06d}.pfm"), depths[k].astype(np.float32))
    write_binary(os.path.join(root, "events.bin"), events, spec.width, spec.height)
    with open(os.path.join(root, "timestamps.txt"), "w") as fh:
        for k in range(n_frames):
            fh.write(f"{spec.frame_time(k)!r}\n")
    with open(os.path.join(root, "spec.json"), "w") as fh:
        json.dump(spec.to_dict(), fh, indent=1)
    return events


def write_dataset(root, n_sequences, frames_per_sequence, height, width, seed=0):
    """Generate ``n_sequences`` random scenes as ``root/seq_XXXX``."""
    paths = []
    for i in range(n_sequences):
        spec = random_scene(seed * 100003 + i, height, width)
        path = os.path.join(root, f"seq_{i:04d}")
        write_sequence(path, spec, frames_per_sequence)
        paths.append(path)
    return paths
