"""Training samples: (voxel grid, image, depth, mask) per synchronized frame."""

import json
import os
from dataclasses import dataclass

import numpy as np

from ..events import DEFAULT_BINS, read_events, voxelize, window_events
from ..imageio import read_pfm, read_pgm
from .frames import valid_mask


@dataclass
class Sample:
    voxel: np.ndarray  # B x H x W
    image: np.ndarray  # 3 x H x W, [0, 1]
    depth: np.ndarray  # 1 x H x W, meters
    mask: np.ndarray  # H x W

    def blanked(self):
        """Copy with the intensity image zeroed."""
        return Sample(self.voxel, np.zeros_like(self.image), self.depth, self.mask)


@dataclass
class Batch:
    voxel: np.ndarray
    image: np.ndarray
    depth: np.ndarray
    mask: np.ndarray

    def __len__(self):
        return len(self.voxel)


def collate(samples, dtype=np.float32):
    return Batch(
        np.stack([s.voxel for s in samples]).astype(dtype),
        np.stack([s.image for s in samples]).astype(dtype),
        np.stack([s.depth for s in samples]).astype(dtype),
        np.stack([s.mask for s in samples])[:, None],
    )


def iterate_batches(samples, batch_size, rng=None, dtype=np.float32):
    """Yield batches; shuffled with ``rng`` when given.  Keeps the short tail."""
    order = np.arange(len(samples))
    if rng is not None:
        rng.shuffle(order)
    for i in range(0, len(order), batch_size):
        yield collate([samples[j] for j in order[i : i + batch_size]], dtype)


def samples_from_frames(images, depths, events, times, bins=DEFAULT_BINS):
    """Pair frame ``k`` (k >= 1) with the events of ``[t_{k-1}, t_k)``."""
    h, w = images.shape[-2:]
    out = []
    for k, sl in enumerate(window_events(events, times), start=1):
        vox = voxelize(sl, h, w, bins).data
        img = np.repeat(images[k][None].astype(np.float32), 3, axis=0)
        depth = depths[k].astype(np.float32)
        mask = valid_mask(depth)
        out.append(Sample(vox, img, np.where(mask, depth, 0.0)[None].astype(np.float32), mask))
    return out


def synthetic_samples(spec, n_frames, bins=DEFAULT_BINS):
    from ..synthetic import render_frames, simulate_events

    images, depths = render_frames(spec, n_frames)
    events = simulate_events(spec, images)
    times = [spec.frame_time(k) for k in range(n_frames)]
    return samples_from_frames(images, depths, events, times, bins)


def load_sequence(path, bins=DEFAULT_BINS):
    """Read one sequence directory written by :func:`unict_depth.synthetic.write_sequence`."""
    with open(os.path.join(path, "timestamps.txt")) as fh:
        times = [float(line) for line in fh if line.strip()]
    names = sorted(os.listdir(os.path.join(path, "images")))
    if len(names) != len(times):
        raise ValueError(f"{path}: {len(names)} images but {len(times)} timestamps")
    images = np.stack([read_pgm(os.path.join(path, "images", n)).astype(np.float32) / 255.0 for n in names])
    depth_names = sorted(os.listdir(os.path.join(path, "depth")))
    depths = np.stack([read_pfm(os.path.join(path, "depth", n)) for n in depth_names])
    events = read_events(os.path.join(path, "events.bin"))
    return samples_from_frames(images, depths, events, times, bins)


def sequence_dirs(root):
    if os.path.exists(os.path.join(root, "timestamps.txt")):
        return [root]
    dirs = [
        os.path.join(root, d)
        for d in sorted(os.listdir(root))
        if os.path.exists(os.path.join(root, d, "timestamps.txt"))
    ]
    if not dirs:
        raise FileNotFoundError(f"{root}: no sequences found")
    return dirs


def load_dataset(root, bins=DEFAULT_BINS):
    samples = []
    for d in sequence_dirs(root):
        samples.extend(load_sequence(d, bins))
    return samples


def read_scene_spec(path):
    from ..synthetic import SceneSpec

    with open(os.path.join(path, "spec.json")) as fh:
        return SceneSpec.from_dict(json.load(fh))
