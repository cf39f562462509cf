"""
Per-cell metric tracking.

Every grid cell writes a JSON-lines file of {cell, epoch, split, loss, acc,
sparsity} records. When a tracking URI is configured the same parameters and
metrics also go to a local mlflow file store.
"""

from __future__ import annotations

import json
import math
import os
from contextlib import contextmanager

from src.utils.logger import get_logger

logger = get_logger(__name__)


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class MetricsWriter:
    def __init__(self, path: str, cell_id: str, tracking_uri: str | None = None, experiment: str = "snn-ablation"):
        self.path = path
        self.cell_id = cell_id
        self.tracking_uri = tracking_uri
        self.experiment = experiment
        self._mlflow = None
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        # one file per cell and run
        open(path, "w").close()

    def log(self, epoch: int, split: str, loss: float, acc: float, sparsity: float, **extra) -> dict:
        record = {
            "cell": self.cell_id,
            "epoch": epoch,
            "split": split,
            "loss": _clean(float(loss)),
            "acc": _clean(float(acc)),
            "sparsity": _clean(float(sparsity)),
        }
        record.update({k: _clean(v) for k, v in extra.items()})
        with open(self.path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        if self._mlflow is not None:
            for key in ("loss", "acc", "sparsity"):
                if record[key] is not None:
                    self._mlflow.log_metric(f"{split}_{key}", record[key], step=epoch)
        return record

    def log_params(self, params: dict) -> None:
        if self._mlflow is not None:
            self._mlflow.log_params({k: str(v) for k, v in params.items()})

    def log_artifact(self, path: str) -> None:
        if self._mlflow is not None:
            self._mlflow.log_artifact(path)

    @contextmanager
    def run(self):
        """Opens an mlflow run for the cell when a tracking URI is set; otherwise a no-op."""
        if not self.tracking_uri:
            yield self
            return
        import mlflow

        mlflow.set_tracking_uri(self.tracking_uri)
        mlflow.set_experiment(self.experiment)
        with mlflow.start_run(run_name=self.cell_id):
            self._mlflow = mlflow
            try:
                yield self
            finally:
                self._mlflow = None
        logger.info(f"📈 Logged {self.cell_id} to mlflow at {self.tracking_uri}")


def read_metrics(path: str) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
