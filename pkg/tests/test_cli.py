import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from endorestore.cli import main
from endorestore.image import Image, load_image, save_image
from endorestore.synth import synth_scene


@pytest.fixture
def scene(tmp_path):
    path = tmp_path / "x.png"
    save_image(synth_scene(64, seed=4), path)
    return path


def _run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_config_line_first(scene, tmp_path, capsys):
    code, out, _ = _run(["degrade", "--in", scene, "--out", tmp_path / "y.png", "--awgn", 10], capsys)
    assert code == 0
    first = out.splitlines()[0]
    assert first.startswith("config: ") and json.loads(first[8:])["awgn"] == 10


def test_metrics_identical(scene, capsys):
    code, out, _ = _run(["metrics", "--ref", scene, "--test", scene], capsys)
    assert code == 0
    assert "psnr=inf" in out.splitlines() and "ssim=1.0" in out.splitlines()


def test_degrade_deterministic(scene, tmp_path, capsys):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    for p in (a, b):
        assert _run(["degrade", "--in", scene, "--awgn", 25, "--seed", 7, "--out", p], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.png"
    _run(["degrade", "--in", scene, "--awgn", 25, "--seed", 8, "--out", c], capsys)
    assert a.read_bytes() != c.read_bytes()


def test_degrade_recipe_json(scene, tmp_path, capsys):
    recipe = json.dumps({"steps": [{"kind": "motion", "length": 5, "angle": 0}, {"kind": "poisson", "peak": 100}], "master_seed": 3})
    code, out, _ = _run(["degrade", "--in", scene, "--recipe", recipe, "--out", tmp_path / "r.png"], capsys)
    assert code == 0 and '"master_seed":3' in out


def test_restore_and_wb(scene, tmp_path, capsys):
    blurred = tmp_path / "b.png"
    _run(["degrade", "--in", scene, "--motion", "9,0", "--out", blurred], capsys)
    code, out, _ = _run(["restore", "--in", blurred, "--method", "rl", "--param", "iterations=10",
                         "--motion", "9,0", "--out", tmp_path / "r.png"], capsys)
    assert code == 0 and "richardson_lucy" in out
    code, out, _ = _run(["wb", "--in", scene, "--out", tmp_path / "w.png", "--srgb"], capsys)
    assert code == 0 and out.splitlines()[-1].startswith("gains: ")
    means = load_image(tmp_path / "w.png").data.reshape(3, -1).mean(axis=1)
    assert means.shape == (3,)


def test_user_errors_exit_1(scene, tmp_path, capsys):
    assert _run(["degrade", "--bogus"], capsys)[0] == 1
    assert _run(["nosuchcommand"], capsys)[0] == 1
    assert _run(["metrics", "--ref", tmp_path / "missing.png", "--test", scene], capsys)[0] == 1
    assert _run(["restore", "--in", scene, "--out", tmp_path / "o.png", "--method", "bm3d"], capsys)[0] == 1
    assert _run(["degrade", "--in", scene, "--out", tmp_path / "o.png", "--awgn", -3], capsys)[0] == 1
    assert _run(["bench", "--out", tmp_path / "rep"], capsys)[0] == 1
    gray = tmp_path / "g.png"
    save_image(Image(np.full((1, 16, 16), 0.5)), gray)
    assert _run(["wb", "--in", gray, "--out", tmp_path / "o.png"], capsys)[0] == 1


def test_internal_error_exit_2(scene, tmp_path, capsys, monkeypatch):
    import endorestore.cli as cli

    def boom(*a, **k):
        raise RuntimeError("unexpected")

    monkeypatch.setattr(cli.metrics, "evaluate", boom)
    assert _run(["metrics", "--ref", scene, "--test", scene], capsys)[0] == 2


def test_bench_counts_and_report(tmp_path, capsys):
    out = tmp_path / "report"
    code, stdout, _ = _run(["bench", "--synth", 3, "--size", 32, "--methods", "gaussian,tv,rl",
                            "--grid", "default", "--threads", 1, "--out", out], capsys)
    assert code == 0
    with open(out / "bench.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * 8 * 3
    assert (out / "bench.md").exists() and (out / "awgn_curves.png").exists()
    code, _, _ = _run(["report", "--csv", out / "bench.csv", "--format", "markdown", "--no-figures",
                       "--out", tmp_path / "again"], capsys)
    assert code == 0
    assert (tmp_path / "again" / "bench.md").read_text() == (out / "bench.md").read_text()


def test_bench_param_override(tmp_path, capsys):
    code, stdout, _ = _run(["bench", "--synth", 1, "--size", 32, "--methods", "gaussian",
                            "--param", "gaussian.sigma=2.0", "--grid", "sanity", "--threads", 1,
                            "--no-figures", "--out", tmp_path / "r"], capsys)
    assert code == 0
    assert _run(["bench", "--synth", 1, "--methods", "gaussian", "--param", "sigma=2", "--out", tmp_path / "r2"], capsys)[0] == 1


def test_synth_and_manifest_bench(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert _run(["synth", "--n", 4, "--size", 32, "--seed", 1, "--out", corpus], capsys)[0] == 0
    code, _, _ = _run(["bench", "--manifest", corpus / "manifest.jsonl", "--split", "train", "--methods", "identity",
                       "--grid", "sanity", "--threads", 1, "--no-figures", "--out", tmp_path / "r"], capsys)
    assert code == 0
    assert sum(1 for _ in open(tmp_path / "r" / "bench.csv")) == 1 + 3 * 2


def test_train_and_bench_checkpoint(tmp_path, capsys):
    ckpt = tmp_path / "m" / "model.ckpt"
    code, out, _ = _run(["train", "--synth", 2, "--size", 32, "--patch", 32, "--per-image", 1, "--steps", 2,
                         "--fine-steps", 2, "--batch", 2, "--base-width", 4, "--out", ckpt], capsys)
    assert code == 0 and ckpt.exists()
    with open(tmp_path / "m" / "model.history.csv") as fh:
        stages = [r["stage"] for r in csv.DictReader(fh)]
    assert stages == ["coarse", "coarse", "fine", "fine"]
    code, _, _ = _run(["bench", "--synth", 1, "--size", 32, "--methods", "identity", "--checkpoint", ckpt,
                       "--grid", "sanity", "--threads", 1, "--no-figures", "--out", tmp_path / "r"], capsys)
    assert code == 0
    with open(tmp_path / "r" / "bench.csv") as fh:
        assert {r["method"] for r in csv.DictReader(fh)} == {"identity", "unet"}
    code, _, _ = _run(["restore", "--in", tmp_path / "m" / "corpus" / "scene_0000.png", "--checkpoint", ckpt,
                       "--out", tmp_path / "u.png"], capsys)
    assert code == 0


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "endorestore.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "bench" in res.stdout
