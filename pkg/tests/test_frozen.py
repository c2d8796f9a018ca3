"""Tests for export, the frozen file format and its size audit."""

import numpy as np
import pytest

from binarization.ops import ScaleMode
from bitkernel.frozen import (
    FrozenKind,
    export_model,
    from_bytes,
    load_frozen,
    payload_audit,
    save_frozen,
    to_bytes,
)
from conftest import ALL_DECOMPOSITIONS, ALL_SCALE_MODES, small_architecture
from core.errors import FrozenModelFormatError
from training.engine import predict_logits, train_step
from training.network import init_train_state, reference_architecture
from training.optim import OptimizerHyper
from training.state import Decomposition


def trained_small(decomposition, scale_mode, batch, steps=2):
    arch = small_architecture(decomposition, scale_mode)
    state = init_train_state(arch, seed=21, lr=0.01)
    for _ in range(steps):
        state, _, _ = train_step(state, arch, *batch, OptimizerHyper())
    return arch, state


class TestExport:
    @pytest.mark.parametrize("decomposition", ALL_DECOMPOSITIONS)
    @pytest.mark.parametrize("scale_mode", ALL_SCALE_MODES)
    def test_matches_training_forward(self, decomposition, scale_mode, small_batch):
        arch, state = trained_small(decomposition, scale_mode, small_batch)
        images = small_batch[0]
        model = export_model(state, arch)
        np.testing.assert_allclose(
            model.predict(images), predict_logits(state, arch, images), rtol=1e-5, atol=1e-5
        )

    def test_layer_stream(self, small_batch):
        arch, state = trained_small(Decomposition.HOLISTIC, ScaleMode.LEARNED, small_batch, steps=0)
        model = export_model(state, arch)
        kinds = [l.kind for l in model.layers]
        assert kinds.count(FrozenKind.BLOCK_START) == len(arch.blocks)
        assert len(model.binary_layers) == len(arch.binary_layers())
        for layer in model.binary_layers:
            assert layer.alpha.dtype == np.float32
            assert layer.weights.shape[0] == layer.geometry.out_channels

    def test_negative_learned_alpha_survives(self, small_batch):
        arch, state = trained_small(Decomposition.TUCKER, ScaleMode.LEARNED, small_batch, steps=0)
        name = arch.binary_layers()[0].name
        state.alphas[name] = -np.abs(state.alphas[name])
        model = export_model(state, arch)
        assert np.all(model.binary_layers[0].alpha < 0)


class TestFileFormat:
    def test_save_load_predictions_identical(self, tmp_path, small_batch):
        arch, state = trained_small(Decomposition.SVD, ScaleMode.ANALYTIC, small_batch)
        model = export_model(state, arch)
        path = save_frozen(model, tmp_path / "model.bncv")
        loaded = load_frozen(path)
        np.testing.assert_array_equal(loaded.predict(small_batch[0]), model.predict(small_batch[0]))
        assert to_bytes(loaded) == path.read_bytes()

    def test_size_independent_of_parametrization(self, small_batch):
        # factors are never written, so every parametrization yields the same file size
        sizes = set()
        for decomposition in ALL_DECOMPOSITIONS:
            arch, state = trained_small(decomposition, ScaleMode.ANALYTIC, small_batch, steps=0)
            sizes.add(len(to_bytes(export_model(state, arch))))
        assert len(sizes) == 1

    def test_reference_compression(self):
        arch = reference_architecture(Decomposition.HOLISTIC, ScaleMode.LEARNED)
        model = export_model(init_train_state(arch, seed=0, lr=1e-3), arch)
        audits = payload_audit(model)
        assert len(audits) == 4
        for audit in audits:
            assert audit.ratio >= 24.0, audit

    def test_bad_magic(self, small_batch):
        arch, state = trained_small(Decomposition.NONE, ScaleMode.ANALYTIC, small_batch, steps=0)
        data = bytearray(to_bytes(export_model(state, arch)))
        data[0:4] = b"XXXX"
        with pytest.raises(FrozenModelFormatError):
            from_bytes(bytes(data))

    def test_truncated(self, small_batch):
        arch, state = trained_small(Decomposition.NONE, ScaleMode.ANALYTIC, small_batch, steps=0)
        data = to_bytes(export_model(state, arch))
        with pytest.raises(FrozenModelFormatError):
            from_bytes(data[:-3])

    def test_trailing_bytes(self, small_batch):
        arch, state = trained_small(Decomposition.NONE, ScaleMode.ANALYTIC, small_batch, steps=0)
        data = to_bytes(export_model(state, arch))
        with pytest.raises(FrozenModelFormatError):
            from_bytes(data + b"\0")
