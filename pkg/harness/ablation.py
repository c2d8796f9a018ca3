"""
Ablation over parametrization and scaling mode.

Eight cells (none, svd, tucker, holistic tucker) x (analytic, learned alpha),
each trained for several seeds. The summary reads only the per-run metrics
files, so it can be rebuilt offline from an existing output directory.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from statistics import median
from typing import Iterable, List, Sequence, Tuple, Union

from binarization.ops import ScaleMode
from core.errors import UsageError
from harness.runner import run_experiment
from harness.settings import ExperimentConfig
from monitoring.metrics import METRICS_FILE, read_metrics
from training.state import Decomposition

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2)
SUMMARY_FILE = "summary.csv"
SUMMARY_COLUMNS = ("decomposition", "holistic", "learned_alpha", "median_accuracy", "runs")

GRID: Tuple[Tuple[Decomposition, ScaleMode], ...] = tuple(
    (d, s)
    for d in (Decomposition.NONE, Decomposition.SVD, Decomposition.TUCKER, Decomposition.HOLISTIC)
    for s in (ScaleMode.ANALYTIC, ScaleMode.LEARNED)
)


@dataclass(frozen=True)
class AblationRow:
    decomposition: Decomposition
    scale_mode: ScaleMode
    accuracies: Tuple[float, ...]

    @property
    def median_accuracy(self) -> float:
        return median(self.accuracies)

    def cells(self) -> Tuple[str, str, str, str, int]:
        # holistic is Tucker shared across a layer group
        shown = Decomposition.TUCKER if self.decomposition is Decomposition.HOLISTIC else self.decomposition
        return (
            str(shown),
            "yes" if self.decomposition is Decomposition.HOLISTIC else "no",
            "yes" if self.scale_mode is ScaleMode.LEARNED else "no",
            f"{self.median_accuracy:.4f}",
            len(self.accuracies),
        )


def cell_name(decomposition: Decomposition, scale_mode: ScaleMode) -> str:
    return f"{decomposition}-{scale_mode}"


def run_dir(out_dir: Path, decomposition: Decomposition, scale_mode: ScaleMode, seed: int) -> Path:
    return out_dir / cell_name(decomposition, scale_mode) / f"seed{seed}"


def run_ablation(
    base: ExperimentConfig,
    out_dir: Union[str, Path],
    seeds: Sequence[int] = DEFAULT_SEEDS,
    grid: Sequence[Tuple[Decomposition, ScaleMode]] = GRID,
) -> List[AblationRow]:
    """Train every cell of `grid` for every seed under out_dir, then summarize."""
    if not seeds:
        raise UsageError("ablation needs at least one seed")
    unknown = [cell for cell in grid if cell not in GRID]
    if not grid or unknown:
        raise UsageError(f"ablation cells must be a non-empty subset of the grid, got {unknown or 'none'}")
    out_dir = Path(out_dir)
    for decomposition, scale_mode in grid:
        for seed in seeds:
            cfg = base.model_copy(
                update={
                    "decomposition": decomposition,
                    "scale_mode": scale_mode,
                    "seed": seed,
                    "output_dir": run_dir(out_dir, decomposition, scale_mode, seed),
                }
            )
            logger.info("ablation cell %s seed %d", cell_name(decomposition, scale_mode), seed)
            run_experiment(cfg)
    rows = summarize(out_dir)
    write_summary(rows, out_dir / SUMMARY_FILE)
    return rows


def final_test_accuracy(metrics_path: Union[str, Path]) -> float:
    tests = [r for r in read_metrics(metrics_path) if r["split"] == "test"]
    if not tests:
        raise UsageError(f"{metrics_path} has no test records")
    return max(tests, key=lambda r: r["step"])["accuracy"]


def summarize(out_dir: Union[str, Path]) -> List[AblationRow]:
    """One row per grid cell that has at least one finished run under out_dir."""
    out_dir = Path(out_dir)
    rows = []
    for decomposition, scale_mode in GRID:
        cell = out_dir / cell_name(decomposition, scale_mode)
        files = sorted(cell.glob(f"seed*/{METRICS_FILE}"))
        if not files:
            logger.warning("no runs found for %s", cell.name)
            continue
        rows.append(AblationRow(decomposition, scale_mode, tuple(final_test_accuracy(f) for f in files)))
    return rows


def write_summary(rows: Iterable[AblationRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow(row.cells())
    return path


def format_table(rows: Iterable[AblationRow]) -> str:
    lines = [f"{'Decomposition':<14} {'Holistic':<9} {'Learn. alpha':<13} {'Accuracy':>9} {'Runs':>5}"]
    for row in rows:
        d, h, a, acc, n = row.cells()
        lines.append(f"{d:<14} {h:<9} {a:<13} {acc:>9} {n:>5}")
    return "\n".join(lines)
