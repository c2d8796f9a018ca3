"""
Distribution export for scaling factors and pre-binarization weights.
Reads the state only; training is never perturbed.
"""

import csv
import logging
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from binarization.ops import ScaleMode, analytic_alpha
from training.network import layer_weights
from training.state import Architecture, TrainState

logger = logging.getLogger(__name__)

NUM_BINS = 64
ALPHA_FILE = "alpha_hist.csv"
WEIGHT_FILE = "weight_hist.csv"
COLUMNS = ("layer_id", "bin_left", "bin_right", "count")


def layer_distributions(state: TrainState, arch: Architecture) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    """(alpha values, pre-binarization weights) per binary layer."""
    alphas, weights = {}, {}
    for layer in arch.binary_layers():
        pre = layer_weights(state, layer)
        weights[layer.name] = pre.reshape(-1)
        if layer.scale_mode is ScaleMode.LEARNED:
            alphas[layer.name] = np.array(state.alphas[layer.name], copy=True)
        else:
            alphas[layer.name] = analytic_alpha(pre)
    return alphas, weights


def _write(path: Path, values: Dict[str, np.ndarray]) -> int:
    rows = 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(COLUMNS)
        for layer_id in sorted(values):
            counts, edges = np.histogram(values[layer_id], bins=NUM_BINS)
            for count, left, right in zip(counts, edges[:-1], edges[1:]):
                writer.writerow([layer_id, repr(float(left)), repr(float(right)), int(count)])
                rows += 1
    return rows


def emit_histograms(state: TrainState, arch: Architecture, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
    """Write alpha_hist.csv and weight_hist.csv (64 uniform bins per layer over its observed range)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    alphas, weights = layer_distributions(state, arch)
    alpha_path, weight_path = out_dir / ALPHA_FILE, out_dir / WEIGHT_FILE
    n_alpha = _write(alpha_path, alphas)
    n_weight = _write(weight_path, weights)
    logger.info("wrote %d alpha and %d weight histogram rows to %s", n_alpha, n_weight, out_dir)
    return alpha_path, weight_path


def read_histogram(path: Union[str, Path]) -> list:
    with open(path, newline="") as f:
        return [
            {"layer_id": r["layer_id"], "bin_left": float(r["bin_left"]), "bin_right": float(r["bin_right"]), "count": int(r["count"])}
            for r in csv.DictReader(f)
        ]
