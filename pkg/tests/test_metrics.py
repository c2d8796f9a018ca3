"""Tests for the metrics log, Prometheus snapshot, histograms and stage tracing."""

import numpy as np

from binarization.ops import ScaleMode
from conftest import small_architecture
from monitoring.histograms import NUM_BINS, emit_histograms, read_histogram
from monitoring.metrics import MetricsWriter, read_metrics
from monitoring.tracing import stage_count, trace_stage
from training.network import init_train_state
from training.state import Decomposition


class TestMetricsWriter:
    def test_records_parse_with_sorted_keys(self, tmp_path):
        writer = MetricsWriter(tmp_path)
        for step in range(1, 4):
            writer.emit(step, 0, "train", 1.0 / step, 0.5, 1e-3)
        writer.emit(3, 0, "test", 0.9, 0.25, 1e-3)
        records = read_metrics(writer.path)
        assert [r["step"] for r in records] == [1, 2, 3, 3]
        assert records[-1] == {"accuracy": 0.25, "epoch": 0, "loss": 0.9, "lr": 1e-3, "split": "test", "step": 3}
        first_line = writer.path.read_text().splitlines()[0]
        assert first_line.index('"accuracy"') < first_line.index('"step"')

    def test_new_writer_starts_empty(self, tmp_path):
        MetricsWriter(tmp_path).emit(1, 0, "train", 1.0, 0.0, 0.1)
        assert read_metrics(MetricsWriter(tmp_path).path) == []

    def test_truncate_after_step(self, tmp_path):
        writer = MetricsWriter(tmp_path)
        for step in range(1, 6):
            writer.emit(step, 0, "train", 1.0, 0.0, 0.1)
        resumed = MetricsWriter(tmp_path, truncate_after_step=3)
        assert [r["step"] for r in read_metrics(resumed.path)] == [1, 2, 3]

    def test_prometheus_snapshot(self, tmp_path):
        writer = MetricsWriter(tmp_path)
        writer.emit(7, 1, "test", 0.5, 0.75, 0.01)
        writer.flush()
        text = writer.prom_path.read_text()
        assert 'latentbin_accuracy{split="test"} 0.75' in text
        assert "latentbin_step 7.0" in text


class TestHistograms:
    def test_sixty_four_bins_per_binary_layer(self, tmp_path):
        arch = small_architecture(Decomposition.TUCKER, ScaleMode.ANALYTIC)
        state = init_train_state(arch, seed=0, lr=1e-3)
        alpha_path, weight_path = emit_histograms(state, arch, tmp_path)
        n_layers = len(arch.binary_layers())
        for path in (alpha_path, weight_path):
            rows = read_histogram(path)
            assert len(rows) == NUM_BINS * n_layers
            assert {r["layer_id"] for r in rows} == {l.name for l in arch.binary_layers()}
        alpha_rows = read_histogram(alpha_path)
        assert all(r["bin_left"] >= 0 for r in alpha_rows)
        per_layer = sum(r["count"] for r in alpha_rows if r["layer_id"] == arch.binary_layers()[0].name)
        assert per_layer == arch.binary_layers()[0].out_channels

    def test_reading_state_does_not_change_it(self, tmp_path):
        arch = small_architecture(Decomposition.HOLISTIC, ScaleMode.LEARNED)
        state = init_train_state(arch, seed=0, lr=1e-3)
        before = {k: v.copy() for k, v in state.trainable().items()}
        emit_histograms(state, arch, tmp_path)
        for name, arr in before.items():
            np.testing.assert_array_equal(state.trainable()[name], arr)


class TestTraceStage:
    def test_counts_completed_calls(self):
        @trace_stage(name="unit-test-stage")
        def work(x):
            return x * 2

        before = stage_count("unit-test-stage")
        assert work(3) == 6
        assert work(4) == 8
        assert stage_count("unit-test-stage") == before + 2

    def test_records_failures_too(self):
        @trace_stage(name="unit-test-failing")
        def boom():
            raise RuntimeError("x")

        before = stage_count("unit-test-failing")
        try:
            boom()
        except RuntimeError:
            pass
        assert stage_count("unit-test-failing") == before + 1
