import json

import numpy as np
import pytest

from src.data.dataset import SpikeDataset
from src.models.architectures import LayerShape, forward
from src.models.energy import (
    ann_macs,
    count_ann_macs,
    count_dense_macs,
    count_snn_synops,
    efficiency_report,
    fanout_map,
)
from src.models.evaluate import predict
from src.models.neurons import SpikeActivity, sparsity
from src.utils.errors import AccountingError, ConfigError
from conftest import make_spec, random_input


def _audio_dataset(n=8, density=0.5, seed=0):
    rng = np.random.default_rng(seed)
    inputs = (rng.random((n, 4, 10)) < density).astype(np.uint8)
    return SpikeDataset(inputs, np.arange(n) % 4, "audio")


# === ANN baseline ===

def test_single_fc_layer_macs():
    assert ann_macs([LayerShape("fc", "linear", (700,), (1024,))], 100) == 71_680_000


def test_pointwise_conv_macs():
    assert ann_macs([LayerShape("c", "conv", (1, 4, 4), (1, 4, 4), kernel_size=1)], 1) == 16


def test_model_macs_by_hand():
    # 4 timesteps x (10*8 + 8*8 + 8*6 + 6*4)
    assert count_ann_macs(make_spec("audio")) == 4 * 216


def test_memory_layers_add_macs():
    d, n = 6, 4
    extra = 4 * ((2 * d * d + d * d) + 2 * n * d)
    assert count_ann_macs(make_spec("audio", "hybrid")) == count_ann_macs(make_spec("audio")) + extra


# === synaptic operations ===

def test_two_spikes_into_fc():
    layout = [LayerShape("fc", "linear", (4,), (10,))]
    activity = SpikeActivity()
    x = np.zeros((1, 1, 4))
    x[0, 0, [0, 2]] = 1.0
    activity.record_input("fc", x)
    assert count_snn_synops(activity, layout) == 20


def test_no_spikes_no_synops():
    layout = [LayerShape("fc", "linear", (4,), (10,))]
    activity = SpikeActivity()
    activity.record_input("fc", np.zeros((3, 2, 4)))
    assert count_snn_synops(activity, layout) == 0


def _brute_force_conv_synops(x, k, pad, c_out):
    _, _, c_in, h, w = x.shape
    total = 0
    for t, b, c, i, j in zip(*np.nonzero(x)):
        for oi in range(h + 2 * pad - k + 1):
            for oj in range(w + 2 * pad - k + 1):
                if oi - pad <= i < oi - pad + k and oj - pad <= j < oj - pad + k:
                    total += c_out
    return total


def test_conv_then_fc_matches_brute_force():
    layout = [
        LayerShape("conv", "conv", (2, 5, 5), (3, 5, 5), kernel_size=3, stride=1, padding=1),
        LayerShape("fc", "linear", (6,), (4,)),
    ]
    rng = np.random.default_rng(0)
    x_conv = (rng.random((3, 2, 2, 5, 5)) < 0.3).astype(float)
    x_fc = (rng.random((3, 2, 6)) < 0.3).astype(float)
    activity = SpikeActivity()
    activity.record_input("conv", x_conv)
    activity.record_input("fc", x_fc)
    expected = _brute_force_conv_synops(x_conv, 3, 1, 3) + int(x_fc.sum()) * 4
    assert count_snn_synops(activity, layout) == expected


def test_corner_pixel_fanout():
    fan = fanout_map(LayerShape("conv", "conv", (1, 4, 4), (2, 4, 4), kernel_size=3, padding=1))
    assert fan[0, 0, 0] == 4 * 2
    assert fan[0, 1, 1] == 9 * 2


def test_synops_add_across_batches(tiny_model):
    model = tiny_model("visual", "hgrn")
    a = forward(model, random_input("visual", 2, seed=1)).activity
    b = forward(model, random_input("visual", 3, seed=2)).activity
    spec = model.spec
    assert count_snn_synops(a.merge(b), spec) == count_snn_synops(a, spec) + count_snn_synops(b, spec)


def test_real_valued_inputs_count_as_dense(tiny_model):
    model = tiny_model("audio", "hopfield")
    activity = forward(model, random_input("audio", 2)).activity
    assert activity.inputs["memory.hopfield"].binary
    assert not activity.inputs["head"].binary
    assert count_dense_macs(activity, model.spec) > 0


def test_activity_layout_mismatch(tiny_model):
    activity = forward(tiny_model("visual"), random_input("visual", 1)).activity
    with pytest.raises(AccountingError):
        count_snn_synops(activity, make_spec("audio"))
    with pytest.raises(AccountingError):
        fanout_map(LayerShape("visual.lif1", "lif", (6,), (6,)))


# === efficiency report ===

def test_report_is_deterministic_and_matches_sparsity(tiny_model):
    model = tiny_model("audio")
    ds = _audio_dataset()
    first, second = efficiency_report(model, ds), efficiency_report(model, ds)
    assert first == second
    _, activity = predict(model, ds)
    assert first.sparsity == sparsity(activity)
    assert first.ann_macs == count_ann_macs(model.spec)
    assert first.snn_synops_total == count_snn_synops(activity, model.spec)
    assert first.efficiency_ratio == pytest.approx(first.ann_macs * first.samples / first.snn_synops_total)


def test_per_sample_synops_are_whole_counts(tiny_model):
    report = efficiency_report(tiny_model("audio", seed=2), _audio_dataset(n=7, seed=3))
    assert isinstance(report.snn_synops, int)
    assert report.snn_synops == round(report.snn_synops_total / 7)
    assert json.loads(report.model_dump_json())["snn_synops"] == report.snn_synops


def test_raising_threshold_reduces_synops(tiny_model):
    ds = _audio_dataset()
    low = efficiency_report(tiny_model("audio", seed=1), ds)
    high = efficiency_report(tiny_model("audio", seed=1, lif={"theta": 50.0}), ds)
    assert high.snn_synops < low.snn_synops
    assert high.sparsity == 1.0


def test_silent_network_reports_infinite_ratio(tiny_model):
    report = efficiency_report(tiny_model("audio"), _audio_dataset(density=0.0))
    assert report.snn_synops == 0
    assert report.efficiency_ratio == float("inf")
    assert "zero_synops" in report.flags
    assert json.loads(report.model_dump_json(), parse_constant=str)["efficiency_ratio"] == "Infinity"


def test_empty_dataset_report(tiny_model):
    empty = SpikeDataset(np.zeros((0, 4, 10), dtype=np.uint8), np.zeros(0), "audio")
    with pytest.raises(ConfigError):
        efficiency_report(tiny_model("audio"), empty)
