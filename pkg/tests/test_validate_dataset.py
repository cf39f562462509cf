import numpy as np
import pytest

from src.app.main import main
from src.data.events import EventStream, Geometry
from src.data.synth import synth_dataset
from src.utils.validate_dataset import events_frame, validate_event_streams

ge = pytest.importorskip("great_expectations")


def _stream(x, geometry, label=0):
    n = len(x)
    return EventStream(np.arange(n), x, np.zeros(n), np.zeros(n), label=label, modality="visual", geometry=geometry)


def test_events_frame_columns():
    streams = [_stream([0, 1], Geometry(4, 4, 2)), _stream([3], Geometry(4, 4, 2), label=2)]
    df = events_frame(streams)
    assert list(df.columns) == ["sample", "t", "x", "y", "p", "label"]
    assert df["sample"].tolist() == [0, 0, 1]
    assert df["label"].tolist() == [0, 0, 2]
    assert events_frame([]).empty


def test_synthetic_streams_pass():
    ok, failed = validate_event_streams(synth_dataset("spatial", 2, 3, seed=0))
    assert ok and failed == []


def test_coordinates_outside_first_geometry_fail():
    streams = [_stream([0, 1], Geometry(4, 4, 2)), _stream([20], Geometry(34, 34, 2))]
    ok, failed = validate_event_streams(streams)
    assert not ok
    assert failed == ["expect_column_values_to_be_between(x)"]


def test_convert_validates_by_default(tmp_path):
    raw = str(tmp_path / "raw")
    assert main(["synth", "--kind", "spatial", "--out", raw, "--classes", "2", "--samples-per-class", "2"]) == 0
    assert main(["convert", "--in", raw, "--out", str(tmp_path / "evt")]) == 0
