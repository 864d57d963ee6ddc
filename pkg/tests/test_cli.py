"""Command-line front end: exit codes, artifacts, and pipeline wiring."""

import csv
import json
import os

import numpy as np
import pytest

from gstdeblur.cli import main
from gstdeblur.config import parse_config, unfold_config_from_mapping
from gstdeblur.degrade import piecewise_smooth_image
from gstdeblur.fileio import read_image, read_kernel, write_image

CONFIG = """
stages = 2
kernel_size = 9
image_transform.kind = haar-wavelet
image_transform.levels = 3

stage.1.mu = 0.001
stage.1.rho = 1.2
stage.1.theta1 = 1e-5
stage.1.theta2.0 = 2e-3
stage.1.theta2.1 = 1e-3
stage.1.theta2.2 = 1e-3
stage.2.mu = 0.05
stage.2.rho = 0.8
stage.2.theta1 = 1e-5
stage.2.theta2.0 = 1e-3
stage.2.theta2.1 = 5e-4
stage.2.theta2.2 = 5e-4
"""

TRAIN_CONFIG = """
stages = 1
kernel_size = 9
image_transform.kind = haar-wavelet
image_transform.levels = 3

train.epochs = 2
train.batch_size = 1
train.lr = 1e-3
train.lr_final = 1e-4
train.seed = 0
"""


@pytest.fixture()
def clean_dir(tmp_path):
    d = tmp_path / "clean"
    d.mkdir()
    for i in range(2):
        write_image(d / f"img{i}.png", piecewise_smooth_image(32, 32, seed=i))
    return d


def synth(clean_dir, out, *extra):
    return main(["synth", "--in", str(clean_dir), "--out", str(out),
                 "--seed", "3", "--kernel-size", "9", *extra])


class TestProx:
    def test_soft_threshold_case(self, capsys):
        assert main(["prox", "--y", "2.0", "--theta", "0.5", "--p", "1.0"]) == 0
        out = capsys.readouterr().out
        lines = dict(ln.split(" = ") for ln in out.strip().splitlines())
        assert float(lines["soft"]) == 1.5
        assert float(lines["gst"]) == 1.5
        assert float(lines["tau"]) == 0.5
        assert abs(float(lines["oracle"]) - 1.5) <= 1e-4

    def test_fractional_p(self, capsys):
        assert main(["prox", "--y", "2.0", "--theta", "1.0", "--p", "0.5",
                     "--n", "50"]) == 0
        lines = dict(ln.split(" = ") for ln in
                     capsys.readouterr().out.strip().splitlines())
        assert abs(float(lines["gst"]) - float(lines["oracle"])) <= 1e-3


class TestUsage:
    def test_unknown_command(self, capsys):
        assert main(["polish"]) == 1

    def test_unknown_flag(self, capsys):
        assert main(["prox", "--y", "1", "--theta", "1", "--p", "1",
                     "--fast"]) == 1

    def test_missing_required_flag(self, capsys):
        assert main(["deblur", "--in", "x"]) == 1


class TestSynth:
    def test_first_order_layout(self, clean_dir, tmp_path):
        out = tmp_path / "synth"
        assert synth(clean_dir, out) == 0
        assert (out / "gt" / "img0.png").exists()
        assert (out / "blur" / "img1.png").exists()
        assert (out / "kernel" / "img0.txt").exists()
        rows = [json.loads(ln) for ln in
                (out / "manifest.jsonl").read_text().splitlines()]
        assert len(rows) == 2
        assert all(r["mode"] == "first-order" for r in rows)
        header = json.loads((out / "run_header.json").read_text())
        assert header["command"] == "synth"
        assert header["seed"] == 3
        assert "version" in header

    def test_second_order_layout(self, clean_dir, tmp_path):
        out = tmp_path / "synth2"
        assert synth(clean_dir, out, "--mode", "second-order") == 0
        assert not (out / "kernel").exists()
        rows = [json.loads(ln) for ln in
                (out / "manifest.jsonl").read_text().splitlines()]
        assert all(r["mode"] == "second-order" for r in rows)
        assert all("steps" in r for r in rows)

    def test_same_seed_byte_identical(self, clean_dir, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert synth(clean_dir, a) == 0
        assert synth(clean_dir, b) == 0
        assert (a / "manifest.jsonl").read_bytes() == (b / "manifest.jsonl").read_bytes()
        for sub in ("blur", "gt"):
            for name in ("img0.png", "img1.png"):
                assert (a / sub / name).read_bytes() == (b / sub / name).read_bytes()

    def test_noise_flag(self, clean_dir, tmp_path):
        out = tmp_path / "noisy"
        assert synth(clean_dir, out, "--noise", "0.01",
                     "--sigma-range", "1.0,2.0") == 0
        rows = [json.loads(ln) for ln in
                (out / "manifest.jsonl").read_text().splitlines()]
        assert all(r["noise_std"] == 0.01 for r in rows)
        assert all(1.0 <= r["kernel"]["sigma"] <= 2.0 for r in rows)

    def test_missing_input_exits_2(self, tmp_path):
        assert main(["synth", "--in", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "o")]) == 2


@pytest.fixture()
def synth_dir(clean_dir, tmp_path):
    out = tmp_path / "data"
    assert synth(clean_dir, out) == 0
    return out


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "engine.cfg"
    path.write_text(CONFIG)
    return path


class TestDeblur:
    def test_directory_run(self, synth_dir, config_path, tmp_path):
        out = tmp_path / "restored"
        assert main(["deblur", "--in", str(synth_dir / "blur"),
                     "--config", str(config_path), "--out", str(out)]) == 0
        for stem in ("img0", "img1"):
            assert (out / f"{stem}.png").exists()
            k = read_kernel(out / f"{stem}.kernel.txt")
            assert k.shape == (9, 9)
            assert k.sum() == pytest.approx(1.0, abs=1e-10)
            trace = [json.loads(ln) for ln in
                     (out / f"{stem}.trace.jsonl").read_text().splitlines()]
            assert [t["stage"] for t in trace] == [0, 1, 2]
        header = json.loads((out / "run_header.json").read_text())
        assert header["command"] == "deblur"
        assert header["config_sha256"]

    def test_single_file_input(self, synth_dir, config_path, tmp_path):
        out = tmp_path / "single"
        assert main(["deblur", "--in", str(synth_dir / "blur" / "img0.png"),
                     "--config", str(config_path), "--out", str(out)]) == 0
        assert (out / "img0.png").exists()

    def test_weights_on_classical_config_rejected(self, synth_dir, config_path,
                                                  tmp_path):
        bogus = tmp_path / "w.bin"
        bogus.write_bytes(b"MGST")
        assert main(["deblur", "--in", str(synth_dir / "blur"),
                     "--config", str(config_path), "--out", str(tmp_path / "x"),
                     "--weights", str(bogus)]) == 1

    def test_missing_config_exits_2(self, synth_dir, tmp_path):
        assert main(["deblur", "--in", str(synth_dir / "blur"),
                     "--config", str(tmp_path / "none.cfg"),
                     "--out", str(tmp_path / "x")]) == 2


class TestTrain:
    def test_fit_writes_config_and_log(self, synth_dir, tmp_path):
        cfg_path = tmp_path / "train.cfg"
        cfg_path.write_text(TRAIN_CONFIG)
        out = tmp_path / "fit"
        assert main(["train", "--data", str(synth_dir),
                     "--config", str(cfg_path), "--out", str(out)]) == 0
        fitted = unfold_config_from_mapping(
            parse_config((out / "fitted.cfg").read_text())
        )
        assert fitted.stages == 1
        assert fitted.params[0].mu > 0
        with open(out / "train_log.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["step", "lr", "loss", "char", "kern"]
        assert len(rows) == 1 + 2 * 2  # 2 epochs x 2 images at batch size 1
        assert float(rows[1][2]) > 0

    def test_dataset_dir_must_be_synth_layout(self, tmp_path):
        cfg_path = tmp_path / "train.cfg"
        cfg_path.write_text(TRAIN_CONFIG)
        (tmp_path / "flat").mkdir()
        assert main(["train", "--data", str(tmp_path / "flat"),
                     "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 2


class TestEval:
    @pytest.fixture()
    def restored(self, synth_dir, config_path, tmp_path):
        out = tmp_path / "restored"
        assert main(["deblur", "--in", str(synth_dir / "blur"),
                     "--config", str(config_path), "--out", str(out)]) == 0
        return out

    def test_report_in_pred_dir_by_default(self, restored, synth_dir):
        assert main(["eval", "--pred", str(restored),
                     "--gt", str(synth_dir / "gt")]) == 0
        with open(restored / "report.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["name", "psnr", "ssim"]
        assert len(rows) == 3
        report = json.loads((restored / "report.json").read_text())
        assert report["summary"]["count"] == 2
        assert set(r["name"] for r in report["rows"]) == {"img0", "img1"}

    def test_kernel_columns(self, restored, synth_dir, tmp_path):
        out = tmp_path / "scored"
        assert main(["eval", "--pred", str(restored),
                     "--gt", str(synth_dir / "gt"),
                     "--kernels", str(synth_dir / "kernel"),
                     "--out", str(out)]) == 0
        with open(out / "report.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["name", "psnr", "ssim", "mnc", "mse", "rmse"]
        report = json.loads((out / "report.json").read_text())
        assert 0.0 < report["summary"]["mnc"]["mean"] <= 1.0
        assert report["summary"]["fsim"] is None

    def test_missing_gt_exits_2(self, restored, tmp_path):
        empty = tmp_path / "nogt"
        empty.mkdir()
        assert main(["eval", "--pred", str(restored), "--gt", str(empty)]) == 2


class TestWorkerCap:
    def test_bad_env_value_exits_1(self, clean_dir, tmp_path, monkeypatch):
        monkeypatch.setenv("MGST_THREADS", "many")
        assert synth(clean_dir, tmp_path / "o") == 1

    def test_single_worker_matches_default(self, clean_dir, tmp_path, monkeypatch):
        a = tmp_path / "a"
        assert synth(clean_dir, a) == 0
        monkeypatch.setenv("MGST_THREADS", "1")
        b = tmp_path / "b"
        assert synth(clean_dir, b) == 0
        assert (a / "manifest.jsonl").read_bytes() == (b / "manifest.jsonl").read_bytes()
        assert (a / "blur" / "img0.png").read_bytes() == (b / "blur" / "img0.png").read_bytes()
