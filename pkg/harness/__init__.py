"""
Experiment harness: configuration, datasets, checkpoints, runs and the CLI.
"""

from .settings import ExperimentConfig, config_hash, load_config
from .dataset import Dataset, DatasetSplits, load_dataset, load_splits, synthetic_dataset
from .checkpoint import load_checkpoint, save_checkpoint
from .runner import ExperimentRunner, RunResult, run_experiment

__all__ = [
    "ExperimentConfig",
    "config_hash",
    "load_config",
    "Dataset",
    "DatasetSplits",
    "load_dataset",
    "load_splits",
    "synthetic_dataset",
    "load_checkpoint",
    "save_checkpoint",
    "ExperimentRunner",
    "RunResult",
    "run_experiment",
]
