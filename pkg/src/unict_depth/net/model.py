"""Preprocessor, encoder, decoder and the assembled depth network."""

import numpy as np

from ..attention import CcViTDA
from ..autodiff import Tensor, no_grad, ops
from ..autodiff.nn import Conv2d, ConvTranspose2d, GroupNorm, Module
from ..autodiff.tensor import DEFAULT_DTYPE
from .config import NetConfig
from .frames import DepthFrame


class ConvNormAct(Module):
    def __init__(self, c_in, c_out, rng, stride=1, groups=8, dtype=DEFAULT_DTYPE):
        self.conv = Conv2d(c_in, c_out, 3, rng, stride=stride, dtype=dtype)
        self.norm = GroupNorm(c_out, groups, dtype=dtype)

    def forward(self, x):
        return ops.relu(self.norm(self.conv(x)))


class ResidualBlock(Module):
    """Two 3x3 conv + GroupNorm layers with a 1x1 projection shortcut."""

    def __init__(self, c_in, c_out, rng, stride=1, groups=8, dtype=DEFAULT_DTYPE):
        self.conv1 = Conv2d(c_in, c_out, 3, rng, stride=stride, dtype=dtype)
        self.norm1 = GroupNorm(c_out, groups, dtype=dtype)
        self.conv2 = Conv2d(c_out, c_out, 3, rng, dtype=dtype)
        self.norm2 = GroupNorm(c_out, groups, dtype=dtype)
        self.short = Conv2d(c_in, c_out, 1, rng, stride=stride, padding=0, dtype=dtype)
        self.short_norm = GroupNorm(c_out, groups, dtype=dtype)

    def forward(self, x):
        h = ops.relu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return ops.relu(h + self.short_norm(self.short(x)))


class Preprocessor(Module):
    """Per-modality 3x3 convs, concatenated and merged at full resolution."""

    def __init__(self, cfg: NetConfig, rng, dtype=DEFAULT_DTYPE):
        c0 = cfg.stem_channels
        self.modality = cfg.modality
        self.event_conv = Conv2d(cfg.bins, c0, 3, rng, dtype=dtype) if cfg.modality != "image" else None
        self.image_conv = Conv2d(cfg.image_channels, c0, 3, rng, dtype=dtype) if cfg.modality != "events" else None
        n_in = c0 * (2 if cfg.modality == "fusion" else 1)
        self.merge = Conv2d(n_in, c0, 3, rng, dtype=dtype)

    def forward(self, voxel, image):
        if voxel is not None and image is not None and voxel.shape[-2:] != image.shape[-2:]:
            raise ValueError(f"voxel grid {voxel.shape[-2:]} and image {image.shape[-2:]} resolutions differ")
        feats = []
        if self.event_conv is not None:
            feats.append(ops.relu(self.event_conv(voxel)))
        if self.image_conv is not None:
            feats.append(ops.relu(self.image_conv(image)))
        x = feats[0] if len(feats) == 1 else ops.concat(feats, axis=-3)
        return ops.relu(self.merge(x))


class Encoder(Module):
    """Two residual blocks (1/2) then four CcViT-DA stages (1/4 .. 1/32)."""

    def __init__(self, cfg: NetConfig, rng, dtype=DEFAULT_DTYPE):
        ch = cfg.channels
        g = cfg.norm_groups
        self.res1 = ResidualBlock(cfg.stem_channels, ch[0], rng, stride=2, groups=g, dtype=dtype)
        self.res2 = ResidualBlock(ch[0], ch[0], rng, stride=1, groups=g, dtype=dtype)
        self.stages = [
            CcViTDA(ch[i], bcfg, cfg.stage_grid(i), rng, dtype=dtype) for i, bcfg in enumerate(cfg.stage_configs())
        ]

    def forward(self, x):
        feats = [self.res2(self.res1(x))]
        for stage in self.stages:
            feats.append(stage(feats[-1]))
        return feats


class DecoderBlock(Module):
    """Deconv x2, concatenate the skip feature, 3x3 conv + norm + ReLU."""

    def __init__(self, c_in, c_skip, c_out, rng, groups=8, dtype=DEFAULT_DTYPE):
        self.up = ConvTranspose2d(c_in, c_out, rng, dtype=dtype)
        self.fuse = ConvNormAct(c_out + c_skip, c_out, rng, groups=groups, dtype=dtype)

    def forward(self, x, skip):
        u = ops.relu(self.up(x))
        if skip.shape[-2:] != u.shape[-2:]:
            raise ValueError(f"skip {skip.shape[-2:]} does not match upsampled {u.shape[-2:]}")
        return self.fuse(ops.concat([u, skip], axis=-3))


class Decoder(Module):
    def __init__(self, cfg: NetConfig, rng, dtype=DEFAULT_DTYPE):
        enc = cfg.channels
        dec = cfg.decoder_channels
        skips = [enc[3], enc[2], enc[1], enc[0], cfg.stem_channels]
        c_in = [enc[4]] + dec[:4]
        self.blocks = [
            DecoderBlock(c_in[j], skips[j], dec[j], rng, groups=cfg.norm_groups, dtype=dtype) for j in range(5)
        ]
        self.head = Conv2d(dec[4], 1, 3, rng, dtype=dtype)
        # start near the middle of the softplus range
        self.head.weight.data *= 0.1
        self.depth_scale = cfg.depth_scale

    def forward(self, stem, feats, drop_skip=None, return_stages=False):
        """``feats`` are the five encoder outputs; ``stem`` the full-res map.

        ``drop_skip`` zeroes the skip input of that decoder block (0..4).
        """
        skips = [feats[3], feats[2], feats[1], feats[0], stem]
        x = feats[4]
        stages = []
        for j, block in enumerate(self.blocks):
            s = skips[j]
            if drop_skip == j:
                s = Tensor(np.zeros(s.shape, dtype=s.dtype))
            x = block(x, s)
            stages.append(x)
        depth = ops.softplus(self.head(x)) * self.depth_scale
        return (depth, stages) if return_stages else depth


class UniCTDepth(Module):
    """Event + image fusion depth network."""

    def __init__(self, cfg: NetConfig, dtype=DEFAULT_DTYPE):
        rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.pre = Preprocessor(cfg, rng, dtype=dtype)
        self.encoder = Encoder(cfg, rng, dtype=dtype)
        self.decoder = Decoder(cfg, rng, dtype=dtype)

    def forward(self, voxel, image, drop_skip=None):
        """Batched ``N x B x H x W`` voxels and ``N x 3 x H x W`` images to
        ``N x 1 x H x W`` depth in meters.  Either input may be ``None`` when
        the network was built for the other modality alone."""
        voxel = self._as_input(voxel)
        image = self._as_input(image)
        stem = self.pre(voxel, image)
        return self.decoder(stem, self.encoder(stem), drop_skip=drop_skip)

    def encode(self, voxel, image):
        stem = self.pre(self._as_input(voxel), self._as_input(image))
        return stem, self.encoder(stem)

    def _as_input(self, x):
        if x is None:
            return None
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        if x.ndim == 3:
            x = ops.reshape(x, (1,) + x.shape)
        h, w = x.shape[-2:]
        if (h, w) != (self.cfg.height, self.cfg.width):
            raise ValueError(f"input {h}x{w} does not match configured {self.cfg.height}x{self.cfg.width}")
        return x

    @property
    def dtype(self):
        return self.pre.merge.weight.dtype

    def infer(self, voxel, image):
        """Depth for one synchronized pair, clipped to ``[0, max_depth]``."""
        with no_grad():
            d = self.forward(voxel, image).data
        d = np.clip(d[0], 0.0, self.cfg.max_depth)
        return DepthFrame(d, np.ones(d.shape[-2:], dtype=bool))
