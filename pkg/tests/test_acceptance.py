"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict (shown in the terminal summary) and
fails when the criterion is not met.  Wall-clock limits are asserted too.
"""

import time

import numpy as np
import pytest

from unict_depth.attention import (
    DCC,
    BlockConfig,
    CcViTDA,
    ChannelAttention,
    ViTDualSA,
    WindowAttention,
    group_channel_attention,
    measure_attention_macs,
    window_attention,
)
from unict_depth.autodiff import Tensor, no_grad, ops
from unict_depth.autodiff.gradcheck import grad_check
from unict_depth.autodiff.optim import AdamW
from unict_depth.events import EventRecord, EventSlice, events_array, read_events, voxelize
from unict_depth.events.io import write_binary
from unict_depth.metrics import abs_rel, avg_error, delta_acc, evaluate, rmse_log
from unict_depth.net import (
    NetConfig,
    UniCTDepth,
    collate,
    depth_loss,
    fit,
    synthetic_samples,
    toy_config,
    train_step,
    valid_mask,
)
from unict_depth.run import load_model, save_model
from unict_depth.synthetic import random_scene

from .conftest import t64
from .test_attention import dense_oracle
from .test_events import random_events
from .test_metrics import brute, random_frame
from .test_net import randomize

F64 = np.float64


# --- 1 ----------------------------------------------------------------------


def test_voxel_grid(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        bins = int(rng.integers(2, 10))
        h, w = rng.integers(1, 40, 2)
        t0, dt = rng.uniform(-5, 5), rng.uniform(1e-3, 2)
        ev = random_events(rng, int(rng.integers(0, 300)), h, w, t0, dt)
        grid = voxelize(EventSlice(ev, t0, dt), h, w, bins, dtype=F64).data
        worst = max(worst, abs(grid.sum() - ev["p"].astype(F64).sum()))
    one = voxelize(EventSlice(events_array([EventRecord(0.625, 0, 0, 1)]), 0.0, 1.0), 1, 1, 5).data[:, 0, 0]
    split_ok = one.tolist() == [0.0, 0.0, 0.5, 0.5, 0.0]
    elapsed = time.perf_counter() - start
    verdict(
        1,
        worst < 1e-6 and split_ok and elapsed < 5,
        f"max |sum V - sum p| {worst:.1e} over 1000 slices, t*=2.5 -> {one.tolist()}, {elapsed:.1f}s",
    )


# --- 2 ----------------------------------------------------------------------


def test_attention_equivalence(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        gh, gw = (int(v) for v in rng.integers(1, 7, 2))
        heads = int(rng.choice([1, 2, 3, 4]))
        c = heads * int(rng.integers(1, 5))
        q, k, v = (rng.standard_normal((gh * gw, c)) for _ in range(3))
        got = window_attention(t64(q, False), t64(k, False), t64(v, False), (gh, gw), (gh, gw), heads).data
        worst = max(worst, float(np.abs(got - dense_oracle(q, k, v, heads)).max()))
    identity = True
    for _ in range(20):
        p, c = (int(x) for x in rng.integers(1, 30, 2))
        q, k, v = (rng.standard_normal((p, c)) for _ in range(3))
        identity &= np.array_equal(group_channel_attention(t64(q, False), t64(k, False), t64(v, False), c).data, v)
    elapsed = time.perf_counter() - start
    verdict(
        2,
        worst < 1e-6 and identity and elapsed < 30,
        f"single-window max diff {worst:.1e} over 100 cases, one channel per group returns V: {identity}, {elapsed:.1f}s",
    )


# --- 3 ----------------------------------------------------------------------


def _named(prefix, module):
    return {f"{prefix}.{k}": v for k, v in module.named_parameters()}


def _block_checks(rng):
    """(name, loss closure, parameters) for every block type, all in float64."""
    small = BlockConfig(channels=4, heads=2, window=(2, 2), group_channels=2)
    dual = BlockConfig(channels=8, heads=2, window=(2, 2), group_channels=4, mlp_ratio=2)
    tokens = t64(rng.standard_normal((1, 16, 4)))
    wide = t64(rng.standard_normal((1, 16, 8)))
    fmap = t64(rng.standard_normal((1, 4, 5, 5)))
    image = t64(rng.standard_normal((1, 3, 8, 8)))

    cmsa = WindowAttention(small, rng).astype(F64)
    mfsa = ChannelAttention(small, rng).astype(F64)
    dcc = DCC(4, rng).astype(F64)
    vit = ViTDualSA(dual, rng).astype(F64)
    cc = CcViTDA(3, dual, (4, 4), rng).astype(F64)
    for m in (vit, cc):
        for name, p in m.named_parameters():
            if name.endswith("bias"):
                p.data[...] = rng.uniform(-0.3, 0.3, p.shape)

    def proj_sum(out):
        w = np.random.default_rng(out.data.size).standard_normal(out.shape)
        return ops.sum(out * w)

    yield "CMSA", lambda: proj_sum(cmsa(tokens, (4, 4))), {"x": tokens, **_named("cmsa", cmsa)}
    yield "MFSA", lambda: proj_sum(mfsa(tokens, (4, 4))), {"x": tokens, **_named("mfsa", mfsa)}
    yield "DCC", lambda: proj_sum(dcc(fmap)), {"x": fmap, **_named("dcc", dcc)}
    yield "ViTDualSA", lambda: proj_sum(vit(wide, (4, 4))), {"x": wide, **_named("vit", vit)}
    yield "CcViTDA", lambda: proj_sum(cc(image)), {"x": image, **_named("cc", cc)}


def test_gradients(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    errors = {}
    kinks = 0
    for name, f, params in _block_checks(rng):
        rep = grad_check(f, params, max_elements=40, rng=np.random.default_rng(0))
        errors[name] = rep.max_error
        kinks += sum(rep.kinks.values())

    model = randomize(UniCTDepth(toy_config(32), dtype=F64))
    samples = synthetic_samples(random_scene(0, 32, 32), 2)
    v, i = t64(samples[0].voxel[None], False), t64(samples[0].image[None], False)
    depth, mask = samples[0].depth[None].astype(F64), samples[0].mask[None]
    rep = grad_check(
        lambda: depth_loss(model(v, i), depth, mask),
        dict(model.named_parameters()),
        max_elements=2,
        rng=np.random.default_rng(0),
    )
    errors["toy net 32x32"] = rep.max_error
    kinks += sum(rep.kinks.values())
    elapsed = time.perf_counter() - start
    worst = max(errors.values())
    detail = ", ".join(f"{k} {e:.1e}" for k, e in errors.items())
    verdict(3, worst < 1e-4 and elapsed < 300, f"max rel err: {detail}; {kinks} ReLU kink probes; {elapsed:.0f}s")


# --- 4 ----------------------------------------------------------------------


def test_complexity_scaling(verdict):
    cfg = BlockConfig(channels=32, heads=2, window=(7, 7), group_channels=16)
    lo = measure_attention_macs(cfg, (28, 56))
    hi = measure_attention_macs(cfg, (56, 56))
    r = {k: hi[k].macs / lo[k].macs for k in lo}
    ok = abs(r["dense"] - 4.0) <= 0.2 and abs(r["cmsa"] - 2.0) <= 0.1 and abs(r["mfsa"] / 2.0 - 1) <= 0.1
    verdict(4, ok, "P 1568 -> 3136 measured MAC ratios: " + ", ".join(f"{k} {v:.3f}" for k, v in r.items()))


# --- 5 ----------------------------------------------------------------------


def test_shape_ladder(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    bad = []
    for size in (64, 96, 128, 224):
        cfg = NetConfig(height=size, width=size)
        model = UniCTDepth(cfg)
        v = Tensor(rng.standard_normal((1, cfg.bins, size, size)).astype(np.float32))
        i = Tensor(rng.random((1, 3, size, size)).astype(np.float32))
        with no_grad():
            stem, feats = model.encode(v, i)
            depth = model.decoder(stem, feats)
        sides = [f.shape[-1] for f in feats] + [f.shape[-2] for f in feats]
        if sides != [size // d for d in (2, 4, 8, 16, 32)] * 2 or depth.shape != (1, 1, size, size):
            bad.append(size)
    elapsed = time.perf_counter() - start
    verdict(5, not bad and elapsed < 60, f"encoder at 1/2..1/32 and full-size output for 64/96/128/224, failures {bad}, {elapsed:.1f}s")


# --- 6 ----------------------------------------------------------------------

# Desk-scale recipes.  The 10-epoch schedule keeps the default shape (AdamW,
# LR halved at milestones) compressed into 10 epochs; ``depth_scale`` starts
# the softplus head near mid-range depth.  The overfit check uses a narrower
# network so the whole criterion fits its time budget.
DESK_NET = dict(stem_channels=24, channels=[24, 48, 48, 96, 96], norm_groups=8, depth_scale=25.0)
OVERFIT_NET = dict(stem_channels=16, channels=[16, 32, 32, 64, 64], norm_groups=8, depth_scale=25.0)
DESK_FIT = dict(epochs=10, batch_size=2, lr=2e-3, milestones=[6, 8], gamma=0.5, seed=0)
N_SCENES, FRAMES_PER_SCENE, VAL_SCENES = 40, 6, 8


def desk_samples(blank_half=False):
    """200 samples (40 scenes x 5 event intervals); the last 8 scenes validate."""
    samples = []
    for s in range(N_SCENES):
        samples += synthetic_samples(random_scene(1000 + s, 64, 64), FRAMES_PER_SCENE)
    if blank_half:
        samples = [x.blanked() if k % 2 else x for k, x in enumerate(samples)]
    n_val = VAL_SCENES * (FRAMES_PER_SCENE - 1)
    return samples[:-n_val], samples[-n_val:]


def train_desk(modality, blank_half=False):
    train, val = desk_samples(blank_half)
    model = UniCTDepth(toy_config(64, modality=modality, **DESK_NET))
    records = fit(model, train, val, **DESK_FIT)
    return records[-1]["abs_rel"]


@pytest.fixture(scope="module")
def overfit():
    """500 AdamW steps at 2e-4 on one batch: 8 consecutive frames of one 64x64 scene."""
    start = time.perf_counter()
    samples = synthetic_samples(random_scene(0, 64, 64), 9)
    batch = collate(samples)
    model = UniCTDepth(toy_config(64, **OVERFIT_NET))
    opt = AdamW(model.parameters(), lr=2e-4)
    losses = [train_step(model, opt, batch) for _ in range(500)]
    return model, samples, losses, time.perf_counter() - start


@pytest.mark.slow
def test_overfit_scene_depth(overfit):
    model, samples, _, _ = overfit
    pred = np.stack([model.infer(s.voxel, s.image).depth for s in samples])
    gt = np.stack([s.depth for s in samples])
    mask = np.stack([s.mask for s in samples])[:, None]
    assert abs_rel(pred, gt, mask) < 0.05


@pytest.mark.slow
def test_training_sanity(verdict, overfit):
    start = time.perf_counter()
    _, _, losses, overfit_secs = overfit
    ratio = losses[-1] / losses[0]
    fusion = train_desk("fusion")
    blank = {m: train_desk(m, blank_half=True) for m in ("fusion", "events", "image")}
    elapsed = time.perf_counter() - start + overfit_secs
    ok = (
        ratio < 0.05
        and fusion < 0.10
        and blank["fusion"] < min(blank["events"], blank["image"])
        and elapsed < 1800
    )
    verdict(
        6,
        ok,
        f"overfit loss ratio {ratio:.4f}; 10-epoch val Abs Rel {fusion:.3f}; "
        f"half-blank val Abs Rel fusion {blank['fusion']:.3f} / events {blank['events']:.3f} / image {blank['image']:.3f}; "
        f"{elapsed / 60:.1f} min",
    )


# --- 7 ----------------------------------------------------------------------


def test_metrics(verdict):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        pred, gt = random_frame(rng, n=int(rng.integers(4, 20)))
        gt[0, 0] = 90.0  # outside the valid range
        e, rel, rl, d = brute(pred, gt, 30)
        got = [avg_error(pred, gt, 30), abs_rel(pred, gt), rmse_log(pred, gt)] + [delta_acc(pred, gt, n) for n in (1, 2, 3)]
        worst = max(worst, max(abs(a - b) for a, b in zip(got, [e, rel, rl, *d])))
    props = 0
    for _ in range(1000):
        pred, gt = random_frame(rng, n=8)
        gt = np.clip(gt, None, 7.5)
        s = rng.uniform(0.1, 10.0)
        a, b = evaluate(pred, gt), evaluate(s * pred, s * gt)
        monotone = a.d1 <= a.d2 <= a.d3
        invariant = (
            abs(a.abs_rel - b.abs_rel) <= 1e-9 * max(a.abs_rel, 1)
            and abs(rmse_log(pred, gt, clamp=None) - rmse_log(s * pred, s * gt, clamp=None)) <= 1e-9
            and (a.d1, a.d2, a.d3) == (b.d1, b.d2, b.d3)
        )
        props += monotone and invariant
    verdict(7, worst < 1e-6 and props == 1000, f"max diff vs brute force {worst:.1e}; properties hold on {props}/1000 frames")


# --- 8 ----------------------------------------------------------------------


def _loss(pred, gt, mask):
    return float(depth_loss(Tensor(np.asarray(pred, F64), dtype=F64), gt, mask).data)


def test_loss(verdict):
    gt = np.array([[[3.0, 7.0], [12.0, 0.5]]])
    full = np.ones((2, 2), bool)
    examples = [_loss(gt, gt, full), _loss(gt - 1, gt, full), _loss(gt + 2, gt, full)]
    rng = np.random.default_rng(8)
    invariant = True
    for _ in range(50):
        g = rng.uniform(1, 70, (1, 8, 8))
        g[0, rng.random((8, 8)) < 0.3] = rng.choice([np.nan, np.inf, 0.0, 120.0])
        mask = valid_mask(g[0])
        if not mask.any():
            continue
        p = rng.uniform(1, 70, (1, 8, 8))
        p2 = np.where(mask, p, rng.uniform(-1e3, 1e3, p.shape))
        g2 = np.where(mask, g, rng.uniform(-1e3, 1e3, g.shape))
        invariant &= _loss(p, g, mask) == _loss(p2, g2, mask)
    verdict(8, examples == [0.0, 2.0, 6.0] and invariant, f"examples {examples}, masked-pixel invariance {invariant}")


# --- 9 ----------------------------------------------------------------------


def test_serialization(verdict, tmp_path):
    rng = np.random.default_rng(9)
    model = UniCTDepth(toy_config(32, variant=4))
    for p in model.parameters():
        p.data += rng.standard_normal(p.shape).astype(p.data.dtype) * 0.01
    v = rng.standard_normal((5, 32, 32)).astype(np.float32)
    i = rng.random((3, 32, 32)).astype(np.float32)
    before = model.infer(v, i).depth
    save_model(tmp_path / "m.ckpt", model)
    ckpt_ok = np.array_equal(load_model(tmp_path / "m.ckpt").infer(v, i).depth, before)

    ev = random_events(rng, 1_000_000, 480, 640)
    write_binary(tmp_path / "ev.bin", ev, 640, 480)
    back = read_events(tmp_path / "ev.bin")
    events_ok = back.tobytes() == ev.tobytes()
    verdict(9, ckpt_ok and events_ok, f"checkpoint infer bit-identical {ckpt_ok}; 1e6 events round-trip exact {events_ok}")
