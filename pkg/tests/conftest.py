"""Shared fixtures for the latentbin test suite."""

import numpy as np
import pytest
import yaml

from binarization.ops import ScaleMode
from training.network import build_architecture, init_train_state
from training.state import Decomposition

ALL_DECOMPOSITIONS = [Decomposition.NONE, Decomposition.SVD, Decomposition.TUCKER, Decomposition.HOLISTIC]
ALL_SCALE_MODES = [ScaleMode.ANALYTIC, ScaleMode.LEARNED]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def toy_architecture(decomposition, scale_mode, channels=2, image_size=4, num_classes=3):
    """No stem, one block of two identically shaped binary convs, BN/pool/FC head."""
    return build_architecture(
        decomposition,
        scale_mode,
        in_channels=channels,
        image_size=image_size,
        num_classes=num_classes,
        stem_width=None,
        stage_widths=(channels,),
        blocks_per_stage=1,
    )


def small_architecture(decomposition, scale_mode, image_size=8):
    """Real stem, a strided block with channel padding and a same-shape block."""
    return build_architecture(
        decomposition,
        scale_mode,
        in_channels=1,
        image_size=image_size,
        num_classes=4,
        stem_width=4,
        stage_widths=(8,),
        blocks_per_stage=2,
    )


@pytest.fixture
def toy_batch():
    rng = np.random.default_rng(7)
    images = rng.normal(size=(4, 2, 4, 4))
    labels = np.array([0, 1, 2, 1])
    return images, labels


@pytest.fixture
def small_batch():
    rng = np.random.default_rng(11)
    images = rng.normal(size=(6, 1, 8, 8))
    labels = np.array([0, 1, 2, 3, 0, 1])
    return images, labels


@pytest.fixture
def toy_state():
    def make(decomposition=Decomposition.TUCKER, scale_mode=ScaleMode.LEARNED, seed=0, lr=1e-3):
        arch = toy_architecture(decomposition, scale_mode)
        return arch, init_train_state(arch, seed=seed, lr=lr)

    return make


TINY_CONFIG = {
    "model": {"decomposition": "holistic", "scale_mode": "learned", "widths": [4, 8]},
    "training": {"seed": 3, "epochs": 1, "batch_size": 16},
    "optimizer": {"name": "adam"},
    "schedule": {"initial_lr": 0.01, "drops": [{"epoch": 1, "multiplier": 0.5}]},
    "data": {"format": "synthetic", "synthetic_train": 32, "synthetic_test": 16},
    "output": {"show_progress": False, "log_level": "WARNING"},
}


@pytest.fixture
def tiny_config_path(tmp_path):
    """A config small enough to train the reference network in a few seconds."""

    def write(**sections):
        data = {k: dict(v) for k, v in TINY_CONFIG.items()}
        for section, values in sections.items():
            data.setdefault(section, {}).update(values)
        path = tmp_path / "tiny.yaml"
        path.write_text(yaml.safe_dump(data))
        return path

    return write
