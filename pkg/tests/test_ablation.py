"""Tests for the ablation grid and its summary."""

import csv
import json
from pathlib import Path

import pytest

from binarization.ops import ScaleMode
from core.errors import UsageError
from harness.ablation import (
    GRID,
    SUMMARY_COLUMNS,
    cell_name,
    final_test_accuracy,
    format_table,
    run_ablation,
    run_dir,
    summarize,
    write_summary,
)
from harness.settings import load_config
from monitoring.metrics import METRICS_FILE
from training.state import Decomposition


def fake_run(path, accuracies):
    path.mkdir(parents=True)
    lines = []
    for step, acc in enumerate(accuracies, start=1):
        lines.append({"accuracy": 0.1, "epoch": step - 1, "loss": 2.0, "lr": 0.01, "split": "train", "step": step})
        lines.append({"accuracy": acc, "epoch": step - 1, "loss": 1.0, "lr": 0.01, "split": "test", "step": step})
    (path / METRICS_FILE).write_text("".join(json.dumps(l, sort_keys=True) + "\n" for l in lines))


class TestSummary:
    def test_eight_cells_with_medians(self, tmp_path):
        for i, (decomposition, scale_mode) in enumerate(GRID):
            for seed, final in enumerate((0.5 + i / 100, 0.9, 0.1)):
                fake_run(run_dir(tmp_path, decomposition, scale_mode, seed), [0.05, final])
        rows = summarize(tmp_path)
        assert len(rows) == 8
        assert [(r.decomposition, r.scale_mode) for r in rows] == list(GRID)
        for i, row in enumerate(rows):
            assert row.median_accuracy == pytest.approx(0.5 + i / 100)
            assert len(row.accuracies) == 3

    def test_summary_table_layout(self, tmp_path):
        fake_run(run_dir(tmp_path, Decomposition.HOLISTIC, ScaleMode.LEARNED, 0), [0.8])
        fake_run(run_dir(tmp_path, Decomposition.NONE, ScaleMode.ANALYTIC, 0), [0.6])
        rows = summarize(tmp_path)
        path = write_summary(rows, tmp_path / "summary.csv")
        with open(path, newline="") as f:
            table = list(csv.reader(f))
        assert tuple(table[0]) == SUMMARY_COLUMNS
        assert table[1] == ["none", "no", "no", "0.6000", "1"]
        assert table[2] == ["tucker", "yes", "yes", "0.8000", "1"]
        assert "Holistic" in format_table(rows)

    def test_summary_reads_only_metrics(self, tmp_path):
        fake_run(run_dir(tmp_path, Decomposition.SVD, ScaleMode.ANALYTIC, 1), [0.3])
        before = sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*"))
        first = summarize(tmp_path)
        assert summarize(tmp_path) == first
        assert sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*")) == before

    def test_final_accuracy_is_last_test_record(self, tmp_path):
        fake_run(tmp_path / "r", [0.2, 0.7, 0.4])
        assert final_test_accuracy(tmp_path / "r" / METRICS_FILE) == 0.4

    def test_run_without_test_records(self, tmp_path):
        path = tmp_path / METRICS_FILE
        path.write_text('{"accuracy": 0.1, "epoch": 0, "loss": 2.0, "lr": 0.01, "split": "train", "step": 1}\n')
        with pytest.raises(UsageError):
            final_test_accuracy(path)

    def test_cell_names(self):
        assert cell_name(Decomposition.HOLISTIC, ScaleMode.ANALYTIC) == "holistic-analytic"
        assert len({cell_name(d, s) for d, s in GRID}) == 8


class TestRunAblation:
    def test_needs_seeds(self, tiny_config_path, tmp_path):
        with pytest.raises(UsageError):
            run_ablation(load_config(tiny_config_path()), tmp_path, seeds=())

    @pytest.mark.slow
    def test_full_grid(self, tiny_config_path, tmp_path):
        rows = run_ablation(load_config(tiny_config_path()), tmp_path, seeds=(0, 1))
        assert len(rows) == 8
        assert all(len(r.accuracies) == 2 for r in rows)
        assert all(0.0 <= r.median_accuracy <= 1.0 for r in rows)
        assert (tmp_path / "summary.csv").is_file()

    def test_grid_subset(self, tiny_config_path, tmp_path):
        cells = ((Decomposition.NONE, ScaleMode.ANALYTIC),)
        rows = run_ablation(load_config(tiny_config_path()), tmp_path, seeds=(0,), grid=cells)
        assert [(r.decomposition, r.scale_mode) for r in rows] == list(cells)
        assert not (tmp_path / cell_name(Decomposition.HOLISTIC, ScaleMode.LEARNED)).exists()

    def test_rejects_cells_outside_grid(self, tiny_config_path, tmp_path):
        cfg = load_config(tiny_config_path())
        with pytest.raises(UsageError):
            run_ablation(cfg, tmp_path, seeds=(0,), grid=())
        with pytest.raises(UsageError):
            run_ablation(cfg, tmp_path, seeds=(0,), grid=((Decomposition.NONE, "sign"),))
        assert list(tmp_path.iterdir()) == []


DEFAULT_CONFIG = Path(__file__).resolve().parents[1] / "config" / "experiment_config.yaml"


class TestAblationTrend:
    @pytest.mark.slow
    def test_learned_alpha_and_holistic_tucker_help(self, tmp_path):
        """Reference network, 10-class 28x28 set, 5 epochs, median of 3 seeds."""
        cells = (
            (Decomposition.NONE, ScaleMode.ANALYTIC),
            (Decomposition.NONE, ScaleMode.LEARNED),
            (Decomposition.HOLISTIC, ScaleMode.LEARNED),
        )
        cfg = load_config(
            DEFAULT_CONFIG,
            {
                "output_dir": tmp_path,
                "show_progress": False,
                "log_level": "WARNING",
                "data": {"synthetic_noise": 192.0},
            },
        )
        assert cfg.epochs == 5
        run_ablation(cfg, tmp_path, seeds=(0, 1, 2), grid=cells)

        medians = {(r.decomposition, r.scale_mode): r.median_accuracy for r in summarize(tmp_path)}
        direct_analytic = medians[Decomposition.NONE, ScaleMode.ANALYTIC]
        assert medians[Decomposition.NONE, ScaleMode.LEARNED] >= direct_analytic
        assert medians[Decomposition.HOLISTIC, ScaleMode.LEARNED] >= direct_analytic + 0.003
