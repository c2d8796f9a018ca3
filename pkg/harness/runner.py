"""
Experiment runner: builds the network for a config, trains it epoch by epoch,
logs metrics, checkpoints and resumes.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from tqdm import tqdm

from harness.checkpoint import load_checkpoint, save_checkpoint
from harness.dataset import DatasetSplits, iterate_minibatches, load_splits, steps_per_epoch
from harness.settings import ExperimentConfig, config_hash, dump_config
from monitoring.metrics import MetricsWriter
from monitoring.tracing import trace_stage
from params.latent import param_num_elements
from training.engine import Trainer, evaluate
from training.network import build_architecture, init_train_state
from training.state import Architecture, TrainState

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.bnck"
CONFIG_FILE = "config.yaml"


@dataclass(frozen=True)
class RunResult:
    state: TrainState
    arch: Architecture
    test_loss: float
    test_accuracy: float
    checkpoint_path: Path
    metrics_path: Path


def architecture_for(cfg: ExperimentConfig, image_shape: Sequence[int], num_classes: int = 10) -> Architecture:
    channels, size, _ = image_shape
    return build_architecture(
        cfg.decomposition,
        cfg.scale_mode,
        in_channels=channels,
        image_size=size,
        num_classes=num_classes,
        stem_width=cfg.widths[0],
        stage_widths=cfg.widths[1:],
        binarize_stem=cfg.binarize_stem,
    )


class ExperimentRunner:
    """One training run per instance; everything it writes goes under cfg.output_dir."""

    def __init__(self, cfg: ExperimentConfig, splits: Optional[DatasetSplits] = None):
        self.cfg = cfg
        self.cfg_hash = config_hash(cfg)
        self.out_dir = Path(cfg.output_dir)
        self.splits = splits if splits is not None else load_splits(cfg.data, cfg.seed)
        self.arch = architecture_for(cfg, self.splits.train.images.shape[1:])
        self.steps_per_epoch = steps_per_epoch(self.splits.train, cfg.batch_size)
        self.schedule = cfg.schedule.schedule()
        self.trainer = Trainer(
            self.arch,
            cfg.optimizer.hyper(),
            self.schedule,
            self.steps_per_epoch,
            cfg.bn_momentum,
        )

    @property
    def checkpoint_path(self) -> Path:
        return self.out_dir / CHECKPOINT_FILE

    def initial_state(self) -> TrainState:
        state = init_train_state(self.arch, self.cfg.seed, self.schedule.lr_at(0), self.cfg.svd_rank)
        latent = sum(param_num_elements(p) for p in state.params.values())
        logger.info(
            "initialized %s/%s network: %d binary layers, %d latent parameters",
            self.cfg.decomposition,
            self.cfg.scale_mode,
            len(self.arch.binary_layers()),
            latent,
        )
        return state

    @trace_stage(name="train")
    def run(self, resume: Optional[Union[str, Path]] = None) -> RunResult:
        """
        Train for cfg.epochs epochs, or continue a checkpoint to that point.

        A resumed run replays the same minibatch order and produces the same
        final state and metrics file as an uninterrupted one.
        """
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / CONFIG_FILE).write_text(dump_config(self.cfg))

        if resume is not None:
            state, _ = load_checkpoint(resume, expected_config_hash=self.cfg_hash)
            metrics = MetricsWriter(self.out_dir, truncate_after_step=state.step)
        else:
            state = self.initial_state()
            metrics = MetricsWriter(self.out_dir)

        start_epoch, skip = divmod(state.step, self.steps_per_epoch)
        for epoch in range(start_epoch, self.cfg.epochs):
            state = self._run_epoch(state, epoch, skip if epoch == start_epoch else 0, metrics)
            test_loss, test_acc = evaluate(state, self.arch, self.splits.test.images, self.splits.test.labels)
            metrics.emit(state.step, epoch, "test", test_loss, test_acc, state.lr)
            metrics.flush()
            save_checkpoint(state, self.checkpoint_path, self.cfg_hash)
            logger.info("epoch %d: test loss %.4f accuracy %.4f", epoch + 1, test_loss, test_acc)

        test_loss, test_acc = evaluate(state, self.arch, self.splits.test.images, self.splits.test.labels)
        if not self.checkpoint_path.exists():
            save_checkpoint(state, self.checkpoint_path, self.cfg_hash)
        return RunResult(state, self.arch, test_loss, test_acc, self.checkpoint_path, metrics.path)

    def _run_epoch(self, state: TrainState, epoch: int, skip: int, metrics: MetricsWriter) -> TrainState:
        batches = iterate_minibatches(self.splits.train, self.cfg.batch_size, self.cfg.seed, epoch)
        progress = tqdm(
            batches,
            total=self.steps_per_epoch,
            desc=f"epoch {epoch + 1}/{self.cfg.epochs}",
            disable=not self.cfg.show_progress,
            leave=False,
        )
        for i, (images, labels) in enumerate(progress):
            if i < skip:
                continue
            lr = state.lr
            state, loss, acc = self.trainer.step(state, images, labels)
            metrics.emit(state.step, epoch, "train", loss, acc, lr)
            progress.set_postfix(loss=f"{loss:.4f}", acc=f"{acc:.3f}")
        return state


def run_experiment(cfg: ExperimentConfig, resume: Optional[Union[str, Path]] = None) -> RunResult:
    return ExperimentRunner(cfg).run(resume)


def load_trained(
    cfg: ExperimentConfig,
    checkpoint: Optional[Union[str, Path]] = None,
    splits: Optional[DatasetSplits] = None,
):
    """
    (state, arch) of a finished run, checked against the config it was trained with.

    The input shape comes from the configured dataset, as it did for training.
    """
    path = Path(checkpoint) if checkpoint is not None else Path(cfg.output_dir) / CHECKPOINT_FILE
    state, _ = load_checkpoint(path, expected_config_hash=config_hash(cfg))
    if splits is None:
        splits = load_splits(cfg.data, cfg.seed)
    return state, architecture_for(cfg, splits.train.images.shape[1:])
