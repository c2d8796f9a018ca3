"""Tests for configuration loading, precedence and hashing."""

from pathlib import Path

import pytest
import yaml

from binarization.ops import ScaleMode
from core.errors import UsageError
from harness.settings import config_hash, dump_config, load_config
from training.optim import OptimizerName
from training.state import Decomposition

DEFAULT_YAML = Path(__file__).resolve().parent.parent / "config" / "experiment_config.yaml"


@pytest.fixture(autouse=True)
def clean_env(monkeypatch, tmp_path):
    # no stray .env or LATENTBIN_* values from the developer's shell
    monkeypatch.chdir(tmp_path)
    for key in ("LATENTBIN_BATCH_SIZE", "LATENTBIN_SEED", "LATENTBIN_OPTIMIZER__NAME", "LATENTBIN_EPOCHS"):
        monkeypatch.delenv(key, raising=False)


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


class TestLoadConfig:
    def test_default_file(self):
        cfg = load_config(DEFAULT_YAML)
        assert cfg.decomposition is Decomposition.HOLISTIC
        assert cfg.scale_mode is ScaleMode.LEARNED
        assert cfg.widths == (16, 32)
        assert cfg.seed == 0
        assert cfg.schedule.schedule().lr_at(4) == pytest.approx(1e-4)

    def test_environment_fills_unset_fields(self, monkeypatch):
        monkeypatch.setenv("LATENTBIN_BATCH_SIZE", "32")
        monkeypatch.setenv("LATENTBIN_OPTIMIZER__NAME", "rmsprop")
        cfg = load_config(None, {"seed": 1})
        assert cfg.batch_size == 32
        assert cfg.optimizer.name is OptimizerName.RMSPROP

    def test_yaml_beats_environment(self, monkeypatch, tiny_config_path):
        monkeypatch.setenv("LATENTBIN_BATCH_SIZE", "32")
        assert load_config(tiny_config_path()).batch_size == 16

    def test_overrides_beat_yaml(self, tiny_config_path):
        cfg = load_config(tiny_config_path(), {"seed": 9, "output_dir": None})
        assert cfg.seed == 9
        assert cfg.output_dir == Path("./runs/default")

    def test_unknown_key(self, tiny_config_path):
        with pytest.raises(UsageError, match="model.depth"):
            load_config(tiny_config_path(model={"depth": 3}))

    def test_unknown_section(self, tmp_path):
        with pytest.raises(UsageError):
            load_config(write_yaml(tmp_path / "c.yaml", {"trainer": {"seed": 1}}))

    def test_missing_seed(self, tmp_path):
        with pytest.raises(UsageError):
            load_config(write_yaml(tmp_path / "c.yaml", {"model": {"decomposition": "svd"}}))

    def test_invalid_value(self, tiny_config_path):
        with pytest.raises(UsageError):
            load_config(tiny_config_path(model={"decomposition": "cp"}))

    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError):
            load_config(tmp_path / "absent.yaml")

    def test_dump_is_loadable(self, tiny_config_path, tmp_path):
        cfg = load_config(tiny_config_path())
        again = load_config(write_yaml(tmp_path / "dumped.yaml", yaml.safe_load(dump_config(cfg))))
        assert again == cfg


class TestConfigHash:
    def test_ignores_output_settings_and_epochs(self, tiny_config_path):
        base = load_config(tiny_config_path())
        moved = load_config(tiny_config_path(output={"output_dir": "/elsewhere", "log_level": "DEBUG"}))
        longer = load_config(tiny_config_path(training={"epochs": 9}))
        assert config_hash(base) == config_hash(moved) == config_hash(longer)

    def test_changes_with_training_inputs(self, tiny_config_path):
        base = load_config(tiny_config_path())
        other = load_config(tiny_config_path(schedule={"initial_lr": 0.02}))
        assert config_hash(base) != config_hash(other)
        assert len(config_hash(base)) == 64
