"""
Per-run metrics: a line-delimited JSON log plus a Prometheus text snapshot.
"""

import json
import logging
from pathlib import Path
from typing import Iterator, List, Optional, Union

from prometheus_client import CollectorRegistry, Counter, Gauge, write_to_textfile

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.jsonl"
PROM_FILE = "metrics.prom"
RECORD_KEYS = ("accuracy", "epoch", "loss", "lr", "split", "step")


class MetricsWriter:
    """
    Appends {step, epoch, split, loss, accuracy, lr} records.

    Records carry no timestamps and are written with sorted keys, so identical
    runs produce identical files. Latest values are mirrored into gauges of a
    private registry and flushed to metrics.prom.
    """

    def __init__(self, out_dir: Union[str, Path], truncate_after_step: Optional[int] = None):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.path = self.out_dir / METRICS_FILE
        self.prom_path = self.out_dir / PROM_FILE
        if truncate_after_step is None:
            self.path.write_text("")
        else:
            self._truncate(truncate_after_step)

        self.registry = CollectorRegistry()
        self.loss = Gauge("latentbin_loss", "Latest loss", ["split"], registry=self.registry)
        self.accuracy = Gauge("latentbin_accuracy", "Latest accuracy", ["split"], registry=self.registry)
        self.lr = Gauge("latentbin_learning_rate", "Current learning rate", registry=self.registry)
        self.step = Gauge("latentbin_step", "Optimizer steps taken", registry=self.registry)
        self.records = Counter("latentbin_records", "Metric records written", ["split"], registry=self.registry)

    def _truncate(self, step: int) -> None:
        """Keep records up to `step` (resuming drops anything logged after the checkpoint)."""
        kept = [r for r in read_metrics(self.path) if r["step"] <= step] if self.path.exists() else []
        self.path.write_text("".join(_encode(r) for r in kept))

    def emit(self, step: int, epoch: int, split: str, loss: float, accuracy: float, lr: float) -> dict:
        record = {
            "accuracy": float(accuracy),
            "epoch": int(epoch),
            "loss": float(loss),
            "lr": float(lr),
            "split": split,
            "step": int(step),
        }
        with open(self.path, "a") as f:
            f.write(_encode(record))
        self.loss.labels(split=split).set(record["loss"])
        self.accuracy.labels(split=split).set(record["accuracy"])
        self.lr.set(record["lr"])
        self.step.set(record["step"])
        self.records.labels(split=split).inc()
        return record

    def flush(self) -> None:
        write_to_textfile(str(self.prom_path), self.registry)


def _encode(record: dict) -> str:
    return json.dumps(record, sort_keys=True) + "\n"


def read_metrics(path: Union[str, Path]) -> List[dict]:
    return list(iter_metrics(path))


def iter_metrics(path: Union[str, Path]) -> Iterator[dict]:
    with open(path) as f:
        for line in f:
            if line.strip():
                yield json.loads(line)
