"""``unict-depth`` command line: voxelize, train, infer, eval, bench, synth.

Failures print one JSON object on stderr, e.g.
``{"error": "config", "field": "net.heads[0]", "message": "..."}``, and exit
nonzero (2 for usage/config problems, 3 for missing or unreadable inputs,
1 otherwise).  ``UNICT_LOG`` (error, info, debug) sets the log level.
"""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from ._accel import set_threads
from .attention.config import ConfigError

log = logging.getLogger("unict_depth")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
BENCH_TOKENS = (49, 196, 784, 3136)


class CliError(Exception):
    def __init__(self, kind, message, code=1, **extra):
        super().__init__(message)
        self.kind = kind
        self.code = code
        self.extra = extra


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, code=2)


# ---------------------------------------------------------------------------
# voxelize


def sidecar_path(out_dir, k):
    return os.path.join(out_dir, f"voxel_{k:06d}.json")


def cmd_voxelize(args):
    from .events import read_events, voxelize, window_events
    from .events.io import _detect_format, read_binary_header

    height, width = args.height, args.width
    if _detect_format(args.events) == "binary":
        w, h, _ = read_binary_header(args.events)
        height = height or h
        width = width or w
    if not height or not width:
        raise CliError("usage", "--height and --width are required for text event files", code=2)
    times = _read_timestamps(args.timestamps)
    events = read_events(args.events)
    os.makedirs(args.out, exist_ok=True)
    slices = window_events(events, times)
    for k, sl in enumerate(slices):
        grid = voxelize(sl, height, width, args.bins, dtype=np.float32)
        name = f"voxel_{k:06d}.f32"
        grid.data.astype("<f4").tofile(os.path.join(args.out, name))
        meta = {
            "file": name,
            "t0": sl.t0,
            "duration": sl.duration,
            "bins": args.bins,
            "height": height,
            "width": width,
            "n_events": len(sl),
        }
        with open(sidecar_path(args.out, k), "w") as fh:
            json.dump(meta, fh, sort_keys=True)
    log.info("wrote %d voxel grids to %s", len(slices), args.out)
    print(json.dumps({"grids": len(slices), "out": args.out}))


def read_voxel(path):
    """Load a raw grid written by ``voxelize`` using its JSON sidecar."""
    meta_path = path[: -len(".f32")] + ".json" if path.endswith(".f32") else path
    with open(meta_path) as fh:
        meta = json.load(fh)
    raw = np.fromfile(os.path.join(os.path.dirname(meta_path), meta["file"]), dtype="<f4")
    return raw.reshape(meta["bins"], meta["height"], meta["width"]), meta


def _read_timestamps(path):
    with open(path) as fh:
        try:
            return [float(line) for line in fh if line.strip()]
        except ValueError as exc:
            raise CliError("format", f"{path}: {exc}", code=2) from None


# ---------------------------------------------------------------------------
# train


def _split(samples, cfg):
    if cfg.val_dataset:
        from .net import load_dataset

        return samples, load_dataset(cfg.val_dataset, cfg.net.bins)
    n_val = int(round(len(samples) * cfg.val_fraction))
    if n_val == 0:
        return samples, []
    return samples[:-n_val], samples[-n_val:]


def cmd_train(args):
    from .net import UniCTDepth, fit, load_dataset
    from .run import RunConfig, save_model

    cfg = RunConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.net.seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    if not cfg.dataset:
        raise ConfigError("dataset", "required for training")
    samples = load_dataset(cfg.dataset, cfg.net.bins)
    train, val = _split(samples, cfg)
    if not train:
        raise ConfigError("dataset", "no training samples")
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "config.json"), "w") as fh:
        fh.write(cfg.to_json() + "\n")
    model = UniCTDepth(cfg.net, dtype=cfg.np_dtype)
    log.info("training %d parameters on %d samples (%d val)", model.num_parameters(), len(train), len(val))
    metrics_path = os.path.join(cfg.out_dir, "metrics.jsonl")
    fit(
        model,
        train,
        val,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        milestones=cfg.milestones,
        gamma=cfg.gamma,
        weight_decay=cfg.weight_decay,
        seed=cfg.seed,
        log_path=metrics_path,
    )
    ckpt = os.path.join(cfg.out_dir, "model.ckpt")
    save_model(ckpt, model)
    print(json.dumps({"checkpoint": ckpt, "metrics": metrics_path}))


# ---------------------------------------------------------------------------
# infer


def cmd_infer(args):
    from .imageio import read_pgm
    from .net import load_dataset
    from .net.data import sequence_dirs
    from .run import load_model

    model = load_model(args.checkpoint)
    os.makedirs(args.out, exist_ok=True)
    written = []
    if args.input:
        for seq in sequence_dirs(args.input):
            sub = os.path.join(args.out, os.path.basename(os.path.normpath(seq))) if seq != args.input else args.out
            os.makedirs(sub, exist_ok=True)
            frames = sorted(os.listdir(os.path.join(seq, "depth")))[1:]
            for name, sample in zip(frames, load_dataset(seq, model.cfg.bins)):
                stem = os.path.splitext(name)[0]
                written.append(_write_prediction(model, sample.voxel, sample.image, sub, stem))
    else:
        if not (args.voxel and args.image):
            raise CliError("usage", "give --input, or both --voxel and --image", code=2)
        voxel, _ = read_voxel(args.voxel)
        img = read_pgm(args.image).astype(np.float32) / 255.0
        image = np.repeat(img[None], 3, axis=0)
        stem = os.path.splitext(os.path.basename(args.image))[0]
        written.append(_write_prediction(model, voxel, image, args.out, stem))
    print(json.dumps({"predictions": len(written), "out": args.out}))


def _write_prediction(model, voxel, image, out_dir, stem):
    from .imageio import write_depth_png, write_pfm

    frame = model.infer(voxel, image)
    pfm = os.path.join(out_dir, stem + ".pfm")
    write_pfm(pfm, frame.depth[0].astype(np.float32))
    write_depth_png(os.path.join(out_dir, stem + ".png"), frame.depth[0])
    return pfm


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args):
    from .imageio import read_pfm
    from .metrics import MetricAccumulator
    from .net import evaluate, load_dataset
    from .net.data import sequence_dirs
    from .net.frames import valid_mask

    if args.checkpoint:
        from .run import load_model

        model = load_model(args.checkpoint)
        loss, report = evaluate(model, load_dataset(args.dataset, model.cfg.bins))
        log.info("loss %.6f", loss)
    elif args.pred:
        acc = MetricAccumulator()
        for seq in sequence_dirs(args.dataset):
            pred_dir = args.pred if seq == args.dataset else os.path.join(args.pred, os.path.basename(seq))
            for name in sorted(os.listdir(os.path.join(seq, "depth"))):
                pred_path = os.path.join(pred_dir, name)
                if not os.path.exists(pred_path):
                    continue
                gt = read_pfm(os.path.join(seq, "depth", name))
                acc.add(np.maximum(read_pfm(pred_path), 1e-6), gt, valid_mask(gt))
        if acc.n == 0:
            raise CliError("input", f"no predictions in {args.pred} match {args.dataset}", code=3)
        report = acc.report()
    else:
        raise CliError("usage", "give --checkpoint or --pred", code=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_json() + "\n")
    if args.json:
        print(report.to_json())
    else:
        print(report.table())


# ---------------------------------------------------------------------------
# bench


def bench_table(cfg, tokens=BENCH_TOKENS, timings=True, seed=0):
    """One row per token count with measured MACs and wall time per branch kind."""
    from .attention import count_attention_macs, measure_attention_macs

    rows = []
    for p in tokens:
        side = int(round(p**0.5))
        if side * side != p:
            raise CliError("usage", f"token count {p} is not a square grid", code=2)
        counts, secs = measure_attention_macs(cfg, (side, side), seed=seed, timings=True)
        analytic = count_attention_macs(cfg, p)
        row = {"P": p, "P_w": cfg.window_tokens}
        for kind in ("dense", "cmsa", "mfsa"):
            if counts[kind].macs != analytic[kind].macs:
                raise RuntimeError(f"{kind} at P={p}: measured {counts[kind].macs} != closed form")
            row[f"{kind}_macs"] = counts[kind].macs
            row[f"{kind}_attn_macs"] = counts[kind].by_kind["attn_qk"] + counts[kind].by_kind["attn_av"]
            if timings:
                row[f"{kind}_ms"] = round(secs[kind] * 1e3, 3)
        row["dense_over_cmsa_attn"] = row["dense_attn_macs"] / row["cmsa_attn_macs"]
        rows.append(row)
    for prev, row in zip(rows, rows[1:]):
        growth = row["P"] / prev["P"]
        for kind in ("dense", "cmsa", "mfsa"):
            row[f"{kind}_growth"] = row[f"{kind}_macs"] / prev[f"{kind}_macs"] / growth
    return rows


def format_bench(rows):
    head = f"{'P':>6} {'dense MACs':>14} {'CMSA MACs':>12} {'MFSA MACs':>12} {'dense/CMSA':>11} {'P/P_w':>7}"
    has_time = "dense_ms" in rows[0]
    if has_time:
        head += f" {'dense ms':>9} {'CMSA ms':>8} {'MFSA ms':>8}"
    lines = [head]
    for r in rows:
        line = (
            f"{r['P']:>6} {r['dense_macs']:>14,} {r['cmsa_macs']:>12,} {r['mfsa_macs']:>12,}"
            f" {r['dense_over_cmsa_attn']:>11.2f} {r['P'] / r['P_w']:>7.2f}"
        )
        if has_time:
            line += f" {r['dense_ms']:>9.2f} {r['cmsa_ms']:>8.2f} {r['mfsa_ms']:>8.2f}"
        lines.append(line)
    return "\n".join(lines)


def cmd_bench(args):
    from .attention import BlockConfig

    channels, heads, window, cg = args.channels, args.heads, args.window, args.group_channels
    if args.config:
        from .run import RunConfig

        net = RunConfig.load(args.config).net
        channels, heads, window, cg = net.channels[1], net.heads[0], net.window, net.group_channels
    cfg = BlockConfig(channels=channels, heads=heads, window=(window, window), group_channels=cg)
    rows = bench_table(cfg, timings=not args.no_time, seed=args.seed or 0)
    if args.json:
        print(json.dumps(rows))
    else:
        print(format_bench(rows))
    if args.kernels:
        from .kernel_bench import format_rows, run

        krows = run(repeats=3)
        print(json.dumps(krows) if args.json else "\n" + format_rows(krows))


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args):
    from .synthetic import write_dataset

    paths = write_dataset(args.out, args.sequences, args.frames, args.height, args.width, seed=args.seed or 0)
    print(json.dumps({"sequences": len(paths), "out": args.out}))


# ---------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="unict-depth", description="Event + image depth estimation toolkit")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=None, help="cap worker threads (1 = deterministic)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("voxelize", help="events + frame timestamps -> raw f32 voxel grids")
    v.add_argument("--events", required=True)
    v.add_argument("--timestamps", required=True, help="one frame time (s) per line")
    v.add_argument("--out", required=True)
    v.add_argument("--bins", type=int, default=5)
    v.add_argument("--height", type=int, default=None)
    v.add_argument("--width", type=int, default=None)
    v.set_defaults(func=cmd_voxelize)

    t = sub.add_parser("train", help="train from a JSON run config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default=None, help="override out_dir")
    t.add_argument("--seed", type=int, default=None)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="predict depth PFM + PNG")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--input", default=None, help="sequence or dataset directory")
    i.add_argument("--voxel", default=None, help="voxel sidecar (.json) or grid (.f32)")
    i.add_argument("--image", default=None, help="8-bit PGM")
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="metrics against ground-truth depth")
    e.add_argument("--dataset", required=True)
    e.add_argument("--checkpoint", default=None)
    e.add_argument("--pred", default=None, help="directory of predicted PFMs named like the ground truth")
    e.add_argument("--out", default=None, help="write the report JSON here")
    e.add_argument("--json", action="store_true", help="print JSON instead of the table")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="attention MAC/time table across token counts")
    b.add_argument("--config", default=None, help="take stage-1 geometry from a run config")
    b.add_argument("--channels", type=int, default=64)
    b.add_argument("--heads", type=int, default=2)
    b.add_argument("--window", type=int, default=7)
    b.add_argument("--group-channels", type=int, default=16)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--no-time", action="store_true")
    b.add_argument("--json", action="store_true")
    b.add_argument("--kernels", action="store_true", help="also time numba vs numpy kernels")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--sequences", type=int, default=4)
    s.add_argument("--frames", type=int, default=6)
    s.add_argument("--height", type=int, default=64)
    s.add_argument("--width", type=int, default=64)
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_synth)
    return p


def _configure_logging():
    level = os.environ.get("UNICT_LOG", "info").lower()
    if level not in LOG_LEVELS:
        raise CliError("config", f"UNICT_LOG must be one of {sorted(LOG_LEVELS)}, got {level!r}", code=2)
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("unict_depth").setLevel(LOG_LEVELS[level])


def _fail(kind, message, code, **extra):
    msg = " ".join(str(message).split())
    print(json.dumps({"error": kind, **extra, "message": msg}, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    from .autodiff.checkpoint import CheckpointError
    from .events import EventFormatError
    from .net import TrainingError

    try:
        _configure_logging()
        args = build_parser().parse_args(argv)
        set_threads(args.threads)
        start = time.perf_counter()
        args.func(args)
        log.debug("%s finished in %.2fs", args.command, time.perf_counter() - start)
        return 0
    except CliError as exc:
        return _fail(exc.kind, exc, exc.code, **exc.extra)
    except ConfigError as exc:
        return _fail("config", str(exc).split(": ", 1)[-1], 2, field=exc.field)
    except FileNotFoundError as exc:
        return _fail("missing_file", f"{exc.filename or exc}: not found", 3)
    except (EventFormatError, CheckpointError) as exc:
        return _fail("format", exc, 3)
    except TrainingError as exc:
        return _fail("training", exc, 1)
    except (ValueError, OSError) as exc:
        return _fail("invalid", exc, 1)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
