"""End-to-end tests of the latentbin command line."""

import csv

import numpy as np
import pytest

from harness.cli import FROZEN_FILE, PREDICTIONS_FILE, main
from harness.dataset import synthetic_dataset, write_idx_images
from monitoring.histograms import ALPHA_FILE, WEIGHT_FILE
from monitoring.metrics import METRICS_FILE


@pytest.fixture
def trained_run(tiny_config_path, tmp_path):
    config = str(tiny_config_path())
    out = tmp_path / "run"
    assert main(["train", "--config", config, "--out", str(out)]) == 0
    return config, out


class TestCli:
    def test_bench(self, capsys):
        assert main(["bench", "--sizes", "64", "--repeats", "1"]) == 0
        assert "ratio" in capsys.readouterr().out

    def test_bench_rejects_zero_size(self):
        assert main(["bench", "--sizes", "0"]) == 1

    def test_unknown_command(self):
        assert main(["fly"]) == 1

    def test_unknown_flag(self, tiny_config_path):
        assert main(["train", "--config", str(tiny_config_path()), "--frobnicate"]) == 1

    def test_help(self):
        assert main(["--help"]) == 0

    def test_missing_config_file(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "absent.yaml")]) == 1

    def test_train_seed_is_deterministic(self, tiny_config_path, tmp_path):
        config = str(tiny_config_path())
        for name in ("a", "b"):
            assert main(["train", "--config", config, "--seed", "7", "--out", str(tmp_path / name)]) == 0
        assert (tmp_path / "a" / METRICS_FILE).read_text() == (tmp_path / "b" / METRICS_FILE).read_text()

    def test_eval_export_hist(self, trained_run, capsys):
        config, out = trained_run
        assert main(["eval", "--config", config, "--out", str(out)]) == 0
        assert "test accuracy" in capsys.readouterr().out
        assert main(["export", "--config", config, "--out", str(out)]) == 0
        assert (out / FROZEN_FILE).is_file()
        assert main(["hist", "--config", config, "--out", str(out)]) == 0
        assert (out / ALPHA_FILE).is_file() and (out / WEIGHT_FILE).is_file()

    def test_eval_with_other_seed_refuses_checkpoint(self, trained_run):
        config, out = trained_run
        assert main(["eval", "--config", config, "--out", str(out), "--seed", "99"]) == 2

    def test_infer(self, trained_run, tmp_path):
        config, out = trained_run
        assert main(["export", "--config", config, "--out", str(out)]) == 0
        images = synthetic_dataset(5, seed=3).images[:, 0].astype(np.uint8)
        idx = write_idx_images(tmp_path / "images-idx3-ubyte", images)
        args = ["infer", "--config", config, "--out", str(out), "--model", str(out / FROZEN_FILE), "--images", str(idx)]
        assert main(args) == 0
        with open(out / PREDICTIONS_FILE, newline="") as f:
            rows = list(csv.DictReader(f))
        assert [int(r["index"]) for r in rows] == list(range(5))
        assert all(0 <= int(r["label"]) < 10 for r in rows)

    def test_infer_bad_model_file(self, tiny_config_path, tmp_path):
        bad = tmp_path / "bad.bncv"
        bad.write_bytes(b"JUNK")
        images = write_idx_images(tmp_path / "i", np.zeros((1, 28, 28), dtype=np.uint8))
        args = ["infer", "--config", str(tiny_config_path()), "--model", str(bad), "--images", str(images)]
        assert main(args) == 2

    def test_ablate_summarize_only(self, tiny_config_path, tmp_path):
        out = tmp_path / "grid"
        run = out / "svd-learned" / "seed0"
        run.mkdir(parents=True)
        (run / METRICS_FILE).write_text(
            '{"accuracy": 0.5, "epoch": 0, "loss": 1.0, "lr": 0.01, "split": "test", "step": 2}\n'
        )
        args = ["ablate", "--config", str(tiny_config_path()), "--out", str(out), "--summarize-only"]
        assert main(args) == 0
        assert (out / "summary.csv").read_text().splitlines()[1] == "svd,no,yes,0.5000,1"
