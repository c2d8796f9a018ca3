#!/usr/bin/env python3
"""
End-to-end tour of latentbin on synthetic digits.

Trains a plain binary network and a holistic-Tucker network with learned
alpha, exports both to packed frozen models, checks the frozen logits
against training, audits per-layer storage and times the XNOR kernel.
"""

import argparse
from pathlib import Path

import numpy as np
from dotenv import load_dotenv

from binarization.ops import ScaleMode
from bitkernel.bench import benchmark_kernel, format_report
from bitkernel.frozen import export_model, load_frozen, payload_audit, save_frozen
from harness.runner import run_experiment
from harness.settings import load_config
from monitoring.tracing import setup_logging
from training.engine import predict_logits
from training.state import Decomposition

load_dotenv()

VARIANTS = (
    (Decomposition.NONE, ScaleMode.ANALYTIC),
    (Decomposition.HOLISTIC, ScaleMode.LEARNED),
)
PARITY_TOLERANCE = 1e-5

BOLD, MAGENTA, CYAN, GREEN, YELLOW, RESET = "\033[1m", "\033[95m", "\033[96m", "\033[92m", "\033[93m", "\033[0m"


def banner(text, color=CYAN, rule="-"):
    line = rule * 60
    print(f"\n{color}{BOLD}{line}\n{text}\n{line}{RESET}")


def report(ok, text):
    print(f"{GREEN if ok else YELLOW}{'ok  ' if ok else 'WARN'} {text}{RESET}")


def run_demo(out_dir, epochs=1, train_examples=300, test_examples=100, bench_sizes=(256, 1024)):
    """Train, export, audit and benchmark; returns per-variant results."""
    out_dir = Path(out_dir)
    results = {}

    banner("latentbin end-to-end run", MAGENTA, "=")

    for decomposition, scale_mode in VARIANTS:
        name = f"{decomposition}-{scale_mode}"
        banner(f"train {name}")
        cfg = load_config(
            None,
            {
                "seed": 0,
                "decomposition": decomposition,
                "scale_mode": scale_mode,
                "epochs": epochs,
                "batch_size": 50,
                "data": {"synthetic_train": train_examples, "synthetic_test": test_examples},
                "output_dir": out_dir / name,
                "show_progress": False,
            },
        )
        run = run_experiment(cfg)
        print(f"test accuracy {run.test_accuracy:.1%} after {run.state.step} steps")

        path = save_frozen(export_model(run.state, run.arch), out_dir / name / "model.bncv")
        frozen = load_frozen(path)

        inputs = np.random.default_rng(0).normal(size=(8,) + run.arch.input_shape)
        gap = float(np.max(np.abs(frozen.predict(inputs) - predict_logits(run.state, run.arch, inputs))))
        report(gap < PARITY_TOLERANCE, f"frozen vs training logits: max gap {gap:.2e}")

        audits = payload_audit(frozen)
        for audit in audits:
            print(f"   {audit.name:<24} {audit.payload_bytes:>6} bytes   {audit.ratio:5.1f}x vs float32")
        results[name] = {
            "accuracy": run.test_accuracy,
            "frozen_gap": gap,
            "min_ratio": min(a.ratio for a in audits),
            "model_path": path,
        }

    banner("XNOR kernel vs float GEMM")
    timings = benchmark_kernel(sizes=bench_sizes, repeats=3)
    print(format_report(timings))
    report(all(t.match for t in timings), "packed and float results agree")
    results["bench"] = timings

    print(f"\noutputs under {out_dir}")
    return results


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="latentbin end-to-end demo")
    parser.add_argument("--out", type=Path, default=Path("./runs/demo"))
    parser.add_argument("--epochs", type=int, default=1)
    args = parser.parse_args()
    setup_logging("WARNING")
    run_demo(args.out, epochs=args.epochs)
