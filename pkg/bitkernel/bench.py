"""
Kernel benchmark: packed XNOR GEMM against a naive float32 GEMM of the same
logical size. Both paths multiply the same {-1, +1} operands, so their
results are compared for exact agreement on every run.
"""

import logging
import time
from dataclasses import asdict, dataclass
from typing import Callable, List, Sequence

import numpy as np

from bitkernel.kernels import xnor_gemm
from bitkernel.packing import pack
from core.errors import require
from monitoring.tracing import trace_stage

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (256, 1024, 4096)
DEFAULT_ROWS = 64


@dataclass(frozen=True)
class BenchRow:
    inner: int
    rows: int
    binary_ops_per_s: float
    float_ops_per_s: float
    ratio: float
    match: bool

    def as_dict(self) -> dict:
        return asdict(self)


def naive_float_gemm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Broadcast multiply-and-sum in float32; no BLAS."""
    return (a[:, None, :] * b[None, :, :]).sum(axis=2, dtype=np.float32)


def _best_time(fn: Callable[[], np.ndarray], repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return max(best, 1e-9)


@trace_stage(name="bench")
def benchmark_kernel(
    sizes: Sequence[int] = DEFAULT_SIZES,
    repeats: int = 5,
    rows: int = DEFAULT_ROWS,
    seed: int = 0,
) -> List[BenchRow]:
    """
    Time both GEMM paths for each inner dimension.

    Args:
        sizes: Inner (dot-product) lengths
        repeats: Timing repetitions; the best one is reported
        rows: Rows of each operand; output is rows x rows
        seed: Operand generator seed

    Returns:
        One BenchRow per size, with ops counted as 2 * rows^2 * inner
    """
    require(repeats >= 1, "repeats must be positive")
    require(all(n > 0 for n in sizes), "sizes must be positive")
    rng = np.random.default_rng(seed)
    report = []
    for n in sizes:
        a = rng.choice(np.array([-1.0, 1.0], dtype=np.float32), size=(rows, n))
        b = rng.choice(np.array([-1.0, 1.0], dtype=np.float32), size=(rows, n))
        pa, pb = pack(a), pack(b)

        binary = xnor_gemm(pa, pb)
        dense = naive_float_gemm(a, b)
        match = bool(np.array_equal(binary, dense.astype(np.int64)))

        ops = 2.0 * rows * rows * n
        t_bin = _best_time(lambda: xnor_gemm(pa, pb), repeats)
        t_float = _best_time(lambda: naive_float_gemm(a, b), repeats)
        row = BenchRow(n, rows, ops / t_bin, ops / t_float, t_float / t_bin, match)
        logger.info("inner=%d ratio=%.2f match=%s", n, row.ratio, match)
        report.append(row)
    return report


def format_report(report: Sequence[BenchRow]) -> str:
    lines = [f"{'inner':>8} {'xnor ops/s':>14} {'float ops/s':>14} {'ratio':>8} {'match':>6}"]
    for r in report:
        lines.append(
            f"{r.inner:>8} {r.binary_ops_per_s:>14.3e} {r.float_ops_per_s:>14.3e} {r.ratio:>8.2f} {str(r.match):>6}"
        )
    return "\n".join(lines)
