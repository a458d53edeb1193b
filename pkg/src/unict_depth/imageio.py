"""PGM / PFM readers and writers, and the depth visualisation PNG."""

import numpy as np


def write_pgm(path, image):
    """8-bit binary PGM (P5)."""
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def _tokens(buf, count, pos):
    out = []
    while len(out) < count:
        while buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            pos = buf.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(buf) and not buf[end : end + 1].isspace():
            end += 1
        out.append(buf[pos:end])
        pos = end
    return out, pos + 1


def read_pgm(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    (magic, w, h, maxval), pos = _tokens(buf, 4, 0)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(w), int(h), int(maxval)
    dt = np.uint8 if maxval < 256 else np.dtype(">u2")
    return np.frombuffer(buf, dtype=dt, count=w * h, offset=pos).reshape(h, w).copy()


def write_pfm(path, depth):
    """Single-channel little-endian PFM (negative scale), rows bottom-up."""
    depth = np.asarray(depth, dtype="<f4")
    h, w = depth.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.flipud(depth).tobytes())


def read_pfm(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    (magic, w, h, scale), pos = _tokens(buf, 4, 0)
    if magic not in (b"Pf", b"PF"):
        raise ValueError(f"{path}: not a PFM file")
    w, h, scale = int(w), int(h), float(scale)
    chans = 3 if magic == b"PF" else 1
    dt = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    data = np.frombuffer(buf, dtype=dt, count=w * h * chans, offset=pos)
    data = data.reshape(h, w, chans) if chans == 3 else data.reshape(h, w)
    return np.flipud(data).astype(np.float32)


# polynomial fit of the turbo colormap, channel-wise in t in [0, 1]
_TURBO = np.array(
    [
        [0.13572138, 4.61539260, -42.66032258, 132.13108234, -152.94239396, 59.28637943],
        [0.09140261, 2.19418839, 4.84296658, -14.18503333, 4.27729857, 2.82956604],
        [0.10667330, 12.64194608, -60.58204836, 110.36276771, -89.90310912, 27.34824973],
    ]
)


def colorize_depth(depth, vmin=0.0, vmax=30.0):
    """``H x W`` depth -> ``H x W x 3`` uint8 turbo-style colours over ``[vmin, vmax]``."""
    t = np.clip((np.asarray(depth, dtype=np.float64) - vmin) / (vmax - vmin), 0.0, 1.0)
    powers = np.stack([t**i for i in range(6)], axis=-1)
    rgb = np.clip(powers @ _TURBO.T, 0.0, 1.0)
    return np.round(rgb * 255).astype(np.uint8)


def write_depth_png(path, depth, vmin=0.0, vmax=30.0):
    from PIL import Image

    Image.fromarray(colorize_depth(depth, vmin, vmax), mode="RGB").save(path)
