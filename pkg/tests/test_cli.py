import json
import shutil

import numpy as np
import pytest

from unict_depth.attention import BlockConfig, ConfigError
from unict_depth.cli import bench_table, main, read_voxel
from unict_depth.events import events_array, voxelize, window_events
from unict_depth.events.io import write_binary
from unict_depth.imageio import read_pfm, read_pgm
from unict_depth.net import NetConfig, UniCTDepth, load_dataset, toy_config
from unict_depth.run import RunConfig, load_model, save_model

TINY_NET = {
    "height": 32,
    "width": 32,
    "stem_channels": 8,
    "channels": [8, 16, 16, 32, 32],
    "heads": [2, 2, 4, 4],
    "window": 4,
    "group_channels": 8,
    "norm_groups": 4,
    "mlp_ratio": 2,
}


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    lines = [line for line in err.splitlines() if line.strip()]
    assert len(lines) == 1, err
    return json.loads(lines[0])


@pytest.fixture(autouse=True)
def quiet(monkeypatch):
    monkeypatch.setenv("UNICT_LOG", "error")


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    assert main(["synth", "--out", str(root), "--sequences", "2", "--frames", "4", "--height", "32", "--width", "32"]) == 0
    return root


def write_config(path, dataset, **extra):
    cfg = {"version": 1, "dataset": str(dataset), "epochs": 2, "batch_size": 2, "val_fraction": 0.34, "net": TINY_NET}
    cfg.update(extra)
    path.write_text(json.dumps(cfg))
    return path


# --- config -----------------------------------------------------------------


def test_defaults_follow_reference_schedule():
    cfg = RunConfig()
    assert (cfg.lr, cfg.batch_size, cfg.epochs, cfg.milestones, cfg.gamma) == (2e-4, 16, 50, [10, 20, 30], 0.5)
    assert cfg.net == NetConfig() and cfg.net.bins == 5 and cfg.net.height == 224


def test_config_round_trip():
    cfg = RunConfig(net=toy_config(64, variant=3), epochs=7, milestones=[2, 5], dataset="x")
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()


@pytest.mark.parametrize(
    "patch,field",
    [
        ({"bogus": 1}, "bogus"),
        ({"epochs": 0}, "epochs"),
        ({"milestones": [5, 3]}, "milestones"),
        ({"dtype": "float16"}, "dtype"),
        ({"version": 2}, "version"),
        ({"net": {"heads": [5, 4, 8, 16]}}, "net.heads[0]"),
        ({"net": {"windw": 7}}, "net.windw"),
    ],
)
def test_config_rejections_name_the_field(patch, field):
    with pytest.raises(ConfigError) as e:
        RunConfig.from_dict({"version": 1, **patch})
    assert e.value.field == field


def test_config_requires_version():
    with pytest.raises(ConfigError) as e:
        RunConfig.from_dict({"epochs": 3})
    assert e.value.field == "version"


def test_bad_json_reports_position():
    with pytest.raises(ConfigError, match="line 2 column"):
        RunConfig.from_json('{"version": 1,\n "epochs": }')


# --- errors and logging -----------------------------------------------------


def test_missing_file_is_one_json_line(capsys, tmp_path):
    code, _, err = run_cli(capsys, "train", "--config", tmp_path / "absent.json")
    assert code == 3
    e = error_of(err)
    assert e["error"] == "missing_file" and "absent.json" in e["message"]


def test_config_error_carries_field(capsys, tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"version": 1, "net": {"heads": [5, 4, 8, 16]}}))
    code, _, err = run_cli(capsys, "train", "--config", tmp_path / "c.json")
    assert code == 2
    assert error_of(err) == {"error": "config", "field": "net.heads[0]", "message": "96 channels not divisible by 5 heads"}


def test_usage_error_is_json(capsys):
    code, _, err = run_cli(capsys, "frobnicate")
    assert code == 2 and error_of(err)["error"] == "usage"


def test_bad_log_level(capsys, monkeypatch):
    monkeypatch.setenv("UNICT_LOG", "chatty")
    code, _, err = run_cli(capsys, "bench", "--no-time")
    assert code == 2 and "UNICT_LOG" in error_of(err)["message"]


def test_malformed_events_reported(capsys, tmp_path):
    (tmp_path / "ev.txt").write_text("0.1 1 1 1\n0.2 1 x 1\n")
    (tmp_path / "ts.txt").write_text("0.0\n0.3\n")
    code, _, err = run_cli(
        capsys, "voxelize", "--events", tmp_path / "ev.txt", "--timestamps", tmp_path / "ts.txt",
        "--out", tmp_path / "v", "--height", 4, "--width", 4,
    )  # fmt: skip
    assert code == 3
    e = error_of(err)
    assert e["error"] == "format" and ":2:" in e["message"]


# --- voxelize ---------------------------------------------------------------


def test_voxelize_writes_every_interval(capsys, tmp_path):
    ev = events_array([(0.01, 1, 2, 1), (0.02, 3, 0, -1), (0.25, 2, 2, 1), (0.3, 0, 0, 1)])
    write_binary(tmp_path / "ev.bin", ev, width=5, height=4)
    times = [0.0, 0.1, 0.2, 0.3]  # the middle interval has no events
    (tmp_path / "ts.txt").write_text("\n".join(map(str, times)) + "\n")
    code, out, _ = run_cli(
        capsys, "voxelize", "--events", tmp_path / "ev.bin", "--timestamps", tmp_path / "ts.txt",
        "--out", tmp_path / "vox", "--bins", 3,
    )  # fmt: skip
    assert code == 0 and json.loads(out)["grids"] == 3
    slices = window_events(ev, times)
    counts = []
    for k, sl in enumerate(slices):
        grid, meta = read_voxel(str(tmp_path / "vox" / f"voxel_{k:06d}.json"))
        assert (meta["height"], meta["width"], meta["bins"]) == (4, 5, 3)
        assert meta["t0"] == times[k] and meta["duration"] == pytest.approx(0.1)
        np.testing.assert_array_equal(grid, voxelize(sl, 4, 5, 3).data)
        counts.append(meta["n_events"])
    assert counts == [2, 0, 2]
    assert not read_voxel(str(tmp_path / "vox" / "voxel_000001.f32"))[0].any()


def test_voxelize_text_needs_size(capsys, tmp_path):
    (tmp_path / "ev.txt").write_text("0.1 1 1 1\n")
    (tmp_path / "ts.txt").write_text("0.0\n0.2\n")
    code, _, err = run_cli(capsys, "voxelize", "--events", tmp_path / "ev.txt", "--timestamps", tmp_path / "ts.txt", "--out", tmp_path / "v")
    assert code == 2 and "--height" in error_of(err)["message"]


# --- synth / eval / bench ---------------------------------------------------


def test_synth_layout(dataset):
    seqs = sorted(p.name for p in dataset.iterdir())
    assert seqs == ["seq_0000", "seq_0001"]
    assert len(list((dataset / "seq_0000" / "depth").iterdir())) == 4
    assert len(load_dataset(str(dataset))) == 6


def test_eval_pred_equal_to_ground_truth(capsys, dataset, tmp_path):
    pred = tmp_path / "pred"
    for seq in ("seq_0000", "seq_0001"):
        shutil.copytree(dataset / seq / "depth", pred / seq)
    code, out, _ = run_cli(capsys, "eval", "--pred", pred, "--dataset", dataset, "--json", "--out", tmp_path / "r.json")
    assert code == 0
    rep = json.loads(out)
    assert rep == json.loads((tmp_path / "r.json").read_text())
    assert all(v == 0 for v in rep["avg_error"].values() if v is not None)
    assert rep["abs_rel"] == 0 and rep["rmse_log"] == 0 and rep["d1"] == 1.0


def test_eval_table(capsys, dataset, tmp_path):
    pred = tmp_path / "pred"
    shutil.copytree(dataset / "seq_0000" / "depth", pred / "seq_0000")
    code, out, _ = run_cli(capsys, "eval", "--pred", pred, "--dataset", dataset)
    assert code == 0 and out.splitlines()[0].split()[:4] == ["10m", "20m", "30m", "AbsRel"]


def test_bench_ratio_tracks_tokens_per_window(capsys):
    cfg = BlockConfig(channels=64, heads=2, window=(7, 7), group_channels=16)
    rows = bench_table(cfg, timings=False)
    for r in rows:
        assert r["dense_over_cmsa_attn"] == pytest.approx(r["P"] / 49)
    # per-token cost: dense grows with P, CMSA and MFSA stay flat
    assert rows[-1]["dense_growth"] > 3.5
    assert rows[-1]["cmsa_growth"] == pytest.approx(1.0)
    assert rows[-1]["mfsa_growth"] == pytest.approx(1.0)
    code, out, _ = run_cli(capsys, "bench", "--no-time", "--json")
    assert code == 0 and [r["P"] for r in json.loads(out)] == [49, 196, 784, 3136]


# --- train / infer / checkpoints --------------------------------------------


def test_train_is_reproducible_single_threaded(capsys, dataset, tmp_path):
    cfg = write_config(tmp_path / "cfg.json", dataset)
    logs = []
    for name in ("a", "b"):
        code, _, err = run_cli(capsys, "--threads", 1, "train", "--config", cfg, "--out", tmp_path / name, "--seed", 3)
        assert code == 0, err
        logs.append((tmp_path / name / "metrics.jsonl").read_bytes())
    assert logs[0] == logs[1]
    records = [json.loads(line) for line in logs[0].decode().splitlines()]
    assert [r["epoch"] for r in records] == [1, 2]
    assert set(records[0]) == {"epoch", "split", "loss", "abs_rel", "rmse_log", "d1", "d2", "d3"}
    resolved = RunConfig.load(tmp_path / "a" / "config.json")
    assert resolved.seed == 3 and resolved.out_dir == str(tmp_path / "a")
    a, b = load_model(str(tmp_path / "a" / "model.ckpt")), load_model(str(tmp_path / "b" / "model.ckpt"))
    assert all(np.array_equal(v, b.state_dict()[k]) for k, v in a.state_dict().items())


def test_train_needs_dataset(capsys, tmp_path):
    (tmp_path / "c.json").write_text('{"version": 1}')
    code, _, err = run_cli(capsys, "train", "--config", tmp_path / "c.json")
    assert code == 2 and error_of(err)["field"] == "dataset"


def test_checkpoint_round_trip_is_bit_identical(tmp_path, rng):
    model = UniCTDepth(toy_config(32, variant=4))
    for p in model.parameters():
        p.data += rng.standard_normal(p.shape).astype(p.data.dtype) * 0.01
    v = rng.standard_normal((5, 32, 32)).astype(np.float32)
    i = rng.random((3, 32, 32)).astype(np.float32)
    before = model.infer(v, i).depth
    save_model(tmp_path / "m.ckpt", model)
    loaded = load_model(tmp_path / "m.ckpt")
    assert loaded.cfg == model.cfg
    assert np.array_equal(loaded.infer(v, i).depth, before)


def test_infer_commands_match_direct_inference(capsys, dataset, tmp_path):
    model = UniCTDepth(NetConfig(**TINY_NET))
    save_model(tmp_path / "m.ckpt", model)
    code, out, _ = run_cli(capsys, "infer", "--checkpoint", tmp_path / "m.ckpt", "--input", dataset, "--out", tmp_path / "p")
    assert code == 0 and json.loads(out)["predictions"] == 6
    sample = load_dataset(str(dataset / "seq_0000"))[0]
    direct = model.infer(sample.voxel, sample.image).depth[0]
    np.testing.assert_array_equal(read_pfm(tmp_path / "p" / "seq_0000" / "000001.pfm"), direct)
    assert (tmp_path / "p" / "seq_0000" / "000001.png").exists()

    seq = dataset / "seq_0000"
    assert run_cli(capsys, "voxelize", "--events", seq / "events.bin", "--timestamps", seq / "timestamps.txt", "--out", tmp_path / "v")[0] == 0
    code, _, _ = run_cli(
        capsys, "infer", "--checkpoint", tmp_path / "m.ckpt", "--voxel", tmp_path / "v" / "voxel_000000.json",
        "--image", seq / "images" / "000001.pgm", "--out", tmp_path / "q",
    )  # fmt: skip
    assert code == 0
    img = np.repeat(read_pgm(seq / "images" / "000001.pgm")[None].astype(np.float32) / 255.0, 3, axis=0)
    np.testing.assert_array_equal(read_pfm(tmp_path / "q" / "000001.pfm"), model.infer(sample.voxel, img).depth[0])


def test_corrupt_checkpoint(capsys, tmp_path):
    (tmp_path / "m.ckpt").write_bytes(b"not a checkpoint")
    code, _, err = run_cli(capsys, "infer", "--checkpoint", tmp_path / "m.ckpt", "--input", tmp_path, "--out", tmp_path / "o")
    assert code == 3 and error_of(err)["error"] == "format"
