import json

import pytest

from src.utils.tracking import MetricsWriter, read_metrics


def test_records_are_sorted_json_lines(tmp_path):
    path = str(tmp_path / "metrics" / "M1-visual.jsonl")
    writer = MetricsWriter(path, "M1-visual")
    record = writer.log(0, "train", 2.3, 0.25, 0.97, lr=0.001)
    assert record == {"acc": 0.25, "cell": "M1-visual", "epoch": 0, "loss": 2.3, "lr": 0.001, "sparsity": 0.97, "split": "train"}
    with open(path) as fh:
        line = fh.readline()
    assert list(json.loads(line)) == sorted(record)


def test_non_finite_values_become_null(tmp_path):
    path = str(tmp_path / "m.jsonl")
    writer = MetricsWriter(path, "c")
    writer.log(1, "test", float("nan"), 0.5, float("inf"))
    (rec,) = read_metrics(path)
    assert rec["loss"] is None and rec["sparsity"] is None
    assert rec["acc"] == 0.5


def test_new_writer_truncates(tmp_path):
    path = str(tmp_path / "m.jsonl")
    MetricsWriter(path, "c").log(0, "train", 1.0, 0.0, 1.0)
    writer = MetricsWriter(path, "c")
    assert read_metrics(path) == []
    writer.log(0, "train", 1.0, 0.0, 1.0)
    writer.log(1, "train", 0.5, 0.5, 1.0)
    assert [r["epoch"] for r in read_metrics(path)] == [0, 1]


def test_run_without_uri_is_local_only(tmp_path):
    writer = MetricsWriter(str(tmp_path / "m.jsonl"), "c")
    with writer.run() as w:
        w.log_params({"seed": 1})
        w.log(0, "train", 1.0, 0.0, 1.0)
    assert len(read_metrics(writer.path)) == 1


def test_run_logs_to_mlflow_file_store(tmp_path):
    mlflow = pytest.importorskip("mlflow")
    uri = (tmp_path / "mlruns").as_uri()
    writer = MetricsWriter(str(tmp_path / "m.jsonl"), "M4-audio", tracking_uri=uri, experiment="unit")
    with writer.run():
        writer.log_params({"model": "M4", "epochs": 2})
        writer.log(0, "train", 1.5, 0.4, 0.9)
        writer.log(1, "train", float("nan"), 0.6, 0.9)
    mlflow.set_tracking_uri(uri)
    runs = mlflow.search_runs(experiment_names=["unit"])
    assert len(runs) == 1
    assert runs.loc[0, "params.model"] == "M4"
    assert runs.loc[0, "metrics.train_acc"] == pytest.approx(0.6)
