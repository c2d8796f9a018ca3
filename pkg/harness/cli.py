"""
latentbin command line.

Exit status: 0 success, 1 usage error, 2 runtime error (including divergence).
"""

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from bitkernel.bench import DEFAULT_SIZES, benchmark_kernel, format_report
from bitkernel.frozen import export_model, load_frozen, payload_audit, save_frozen
from core.errors import LatentBinError, UsageError
from harness.ablation import DEFAULT_SEEDS, format_table, run_ablation, summarize, write_summary, SUMMARY_FILE
from harness.dataset import load_splits, read_idx_images
from harness.runner import load_trained, run_experiment
from harness.settings import DEFAULT_CONFIG_PATH, ExperimentConfig, load_config
from monitoring.histograms import emit_histograms
from monitoring.tracing import setup_logging
from training.engine import evaluate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

FROZEN_FILE = "model.bncv"
PREDICTIONS_FILE = "predictions.csv"


class _Parser(argparse.ArgumentParser):
    """Raises UsageError instead of exiting, so main() owns the exit status."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--seed", type=int, help="Override the configured seed")
    p.add_argument("--out", type=Path, help="Output directory")
    p.add_argument("--resume", type=Path, help="Checkpoint to resume from (train) or read (eval/export/hist)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latentbin", description="Latent-parametrized binary CNN training and XNOR inference")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _common(subs.add_parser("train", help="Train and write checkpoints and metrics"))
    _common(subs.add_parser("eval", help="Accuracy on the held-out split"))
    _common(subs.add_parser("export", help="Write the frozen binary model"))

    infer = subs.add_parser("infer", help="Run a frozen model on an IDX image file")
    _common(infer)
    infer.add_argument("--model", type=Path, required=True, help="Frozen model file")
    infer.add_argument("--images", type=Path, required=True, help="IDX image file")

    _common(subs.add_parser("hist", help="Alpha and pre-binarization weight histograms"))

    bench = subs.add_parser("bench", help="XNOR GEMM vs naive float GEMM")
    bench.add_argument("--sizes", type=int, nargs="+", default=list(DEFAULT_SIZES))
    bench.add_argument("--repeats", type=int, default=5)
    bench.add_argument("--seed", type=int, default=0)

    ablate = subs.add_parser("ablate", help="Decomposition x scaling grid over several seeds")
    _common(ablate)
    ablate.add_argument("--seeds", type=int, nargs="+", default=list(DEFAULT_SEEDS))
    ablate.add_argument("--summarize-only", action="store_true", help="Rebuild the summary from existing runs")
    return parser


def _config(args) -> ExperimentConfig:
    path = args.config
    if path is None and DEFAULT_CONFIG_PATH.is_file():
        path = DEFAULT_CONFIG_PATH
    cfg = load_config(path, {"seed": args.seed, "output_dir": args.out})
    setup_logging(cfg.log_level)
    return cfg


# ============= Commands =============


def cmd_train(args) -> int:
    cfg = _config(args)
    result = run_experiment(cfg, args.resume)
    print(f"test accuracy {result.test_accuracy:.4f} (loss {result.test_loss:.4f}) after {result.state.step} steps")
    print(f"checkpoint: {result.checkpoint_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    splits = load_splits(cfg.data, cfg.seed)
    state, arch = load_trained(cfg, args.resume, splits)
    loss, acc = evaluate(state, arch, splits.test.images, splits.test.labels)
    print(f"test accuracy {acc:.4f} (loss {loss:.4f}) on {len(splits.test)} examples")
    return EXIT_OK


def cmd_export(args) -> int:
    cfg = _config(args)
    state, arch = load_trained(cfg, args.resume)
    model = export_model(state, arch)
    path = save_frozen(model, Path(cfg.output_dir) / FROZEN_FILE)
    for audit in payload_audit(model):
        print(f"{audit.name:<24} {audit.payload_bytes:>8} bytes  {audit.ratio:6.1f}x smaller than float32")
    print(f"frozen model: {path}")
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = _config(args)
    model = load_frozen(args.model)
    splits = load_splits(cfg.data, cfg.seed)
    images = read_idx_images(args.images)[:, None].astype(np.float64)
    logits = model.predict(splits.normalizer.transform(images))
    predictions = np.argmax(logits, axis=1)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / PREDICTIONS_FILE
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("index", "label"))
        writer.writerows(enumerate(predictions.tolist()))
    print(f"{len(predictions)} predictions written to {path}")
    return EXIT_OK


def cmd_hist(args) -> int:
    cfg = _config(args)
    state, arch = load_trained(cfg, args.resume)
    alpha_path, weight_path = emit_histograms(state, arch, cfg.output_dir)
    print(f"histograms: {alpha_path}, {weight_path}")
    return EXIT_OK


def cmd_bench(args) -> int:
    setup_logging()
    if args.repeats < 1 or any(n < 1 for n in args.sizes):
        raise UsageError("sizes and repeats must be positive")
    print(format_report(benchmark_kernel(args.sizes, args.repeats, seed=args.seed)))
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _config(args)
    out = Path(cfg.output_dir)
    if args.summarize_only:
        rows = summarize(out)
        write_summary(rows, out / SUMMARY_FILE)
    else:
        rows = run_ablation(cfg, out, args.seeds)
    print(format_table(rows))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "export": cmd_export,
    "infer": cmd_infer,
    "hist": cmd_hist,
    "bench": cmd_bench,
    "ablate": cmd_ablate,
}


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging()
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (UsageError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LatentBinError, OSError) as exc:
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
