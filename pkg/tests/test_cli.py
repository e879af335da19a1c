import subprocess
import sys

import numpy as np
import pytest

from conftest import make_frame

from goalienet.cli import build_parser, run, split_clips
from goalienet.tensor.serialize import save_tensors

SMALL_CONFIG = "epochs = 1\nbatch_size = 4\nmodel.input_size = 32,32\nmodel.base_channels = 4\n"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic data plus a checkpoint trained through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    assert run(["synth", "--out", str(root / "data"), "--frames", "6", "--seed", "9"]) == 0
    (root / "small.cfg").write_text(SMALL_CONFIG)
    assert run(["train", "--data", str(root / "data"), "--config", str(root / "small.cfg"),
                "--out", str(root / "run" / "model.ck")]) == 0
    return root


def test_synth_writes_images_and_annotations(tmp_path, capsys):
    assert run(["synth", "--out", str(tmp_path), "--frames", "4", "--seed", "1"]) == 0
    assert len(list(tmp_path.rglob("*.ppm"))) == 4
    assert "wrote 4 frames" in capsys.readouterr().out


def test_train_outputs(workspace):
    log = (workspace / "run" / "model.ck.loss.csv").read_text().splitlines()
    assert log[0] == "epoch,step,loss" and len(log) == 2
    assert (workspace / "run" / "model.ck").read_bytes()[:4] == b"GNCK"


def test_eval_writes_reports(workspace, tmp_path):
    out = tmp_path / "ev"
    assert run(["eval", "--ckpt", str(workspace / "run" / "model.ck"), "--data", str(workspace / "data"),
                "--out", str(out), "--dump-heatmaps", "2"]) == 0
    rows = (out / "accuracy.csv").read_text().splitlines()
    assert sum(1 for r in rows[1:] if r.split(",")[0].isdigit()) == 29
    assert (out / "accuracy.svg").read_text().lstrip().startswith("<")
    assert len((out / "predictions.csv").read_text().splitlines()) == 1 + 6 * 29
    assert (out / "summary.txt").exists() and (out / "heatmaps.bin").exists()

    assert run(["decode", "--heatmap", str(out / "heatmaps.bin")]) == 0
    (out / "accuracy.svg").unlink()
    assert run(["report", "--eval", str(out)]) == 0
    assert (out / "accuracy.svg").exists()


def test_eval_frame_filter(workspace, tmp_path):
    ids = tmp_path / "ids.txt"
    ids.write_text("nope\n")
    code = run(["eval", "--ckpt", str(workspace / "run" / "model.ck"), "--data", str(workspace / "data"),
                "--out", str(tmp_path / "ev"), "--frames", str(ids)])
    assert code == 2


def test_missing_checkpoint(workspace, tmp_path, capsys):
    missing = tmp_path / "absent.ck"
    code = run(["eval", "--ckpt", str(missing), "--data", str(workspace / "data"), "--out", str(tmp_path)])
    assert code == 2
    assert f"checkpoint not found: {missing}" in capsys.readouterr().err


def test_corrupt_checkpoint(workspace, tmp_path, capsys):
    bad = tmp_path / "bad.ck"
    bad.write_bytes((workspace / "run" / "model.ck").read_bytes()[:-1])
    assert run(["eval", "--ckpt", str(bad), "--data", str(workspace / "data"), "--out", str(tmp_path)]) == 2
    assert "bad.ck" in capsys.readouterr().err


def test_decode_prints_coordinates(tmp_path, capsys):
    m = np.zeros((2, 4, 4), np.float32)
    m[0, 1, 2] = 1.0
    m[0, 1, 3] = 0.5
    save_tensors(tmp_path / "h.bin", {"maps": m})
    assert run(["decode", "--heatmap", str(tmp_path / "h.bin")]) == 0
    assert capsys.readouterr().out.splitlines() == ["maps[0] 2.25 1.00", "maps[1] 0.25 0.00"]


def test_bad_config_key_is_usage_error(workspace, tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("epochs = 1\nlearning_rat = 0.1\n")
    code = run(["train", "--data", str(workspace / "data"), "--config", str(tmp_path / "c.cfg"),
                "--out", str(tmp_path / "m.ck")])
    assert code == 1 and "learning_rat" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["fly"], ["synth", "--frames", "2"], ["synth", "--out", "x", "--frames", "0",
                                  "--seed", "1"], ["train", "--data", "d", "--out", "o", "--bogus"],
                                  ["decode", "--heatmap", "h", "--second", "third"]])
def test_usage_errors(argv):
    assert run(argv) == 1


def test_invalid_thread_env(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("GOALIENET_THREADS", "zero")
    assert run(["synth", "--out", str(tmp_path), "--frames", "1", "--seed", "1"]) == 1
    assert "GOALIENET_THREADS" in capsys.readouterr().err


def test_thread_env_respected(monkeypatch, tmp_path):
    monkeypatch.setenv("GOALIENET_THREADS", "1")
    assert run(["synth", "--out", str(tmp_path), "--frames", "2", "--seed", "1"]) == 0


@pytest.mark.parametrize("command", [None, "synth", "train", "eval", "decode", "report"])
def test_help_lists_flags(command, capsys):
    argv = ([command] if command else []) + ["--help"]
    assert run(argv) == 0
    text = capsys.readouterr().out
    parser = build_parser()
    if command:
        parser = parser._subparsers._group_actions[0].choices[command]
    for action in parser._actions:
        for flag in action.option_strings:
            assert flag in text


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "goalienet", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "synth" in proc.stdout


def test_holdout_clips(tmp_path):
    frames = [make_frame({1: (10.0, 10.0), 2: (50.0, 60.0)}, frame_id=f"{clip}/{i}")
              for i, clip in enumerate("aabccd")]
    train, hold = split_clips(frames, 0.5, seed=1)
    held = {f.frame_id.split("/")[0] for f in hold}
    assert len(held) == 2 and not held & {f.frame_id.split("/")[0] for f in train}
    assert len(train) + len(hold) == 6
    assert split_clips(frames, 0.5, seed=1) == (train, hold)
    with pytest.raises(ValueError):
        split_clips(frames, 0.99, seed=1)


def test_train_holdout_file(workspace, tmp_path):
    (tmp_path / "c.cfg").write_text(SMALL_CONFIG)
    ck = tmp_path / "m.ck"
    assert run(["train", "--data", str(workspace / "data"), "--config", str(tmp_path / "c.cfg"),
                "--out", str(ck), "--holdout-clips", "0.3", "--log", str(tmp_path / "loss.csv")]) == 0
    held = (tmp_path / "m.ck.holdout.txt").read_text().split()
    assert held and (tmp_path / "loss.csv").exists()
