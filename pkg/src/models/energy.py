"""
Operation-count energy accounting.

The ANN baseline is the same architecture evaluated densely at every
timestep (multiply-accumulates). The SNN cost counts one accumulate per
presynaptic spike per outgoing connection (synaptic operations). Inputs that
are real-valued (memory states, residual features) cannot be event-driven and
are tallied separately as dense MACs.
"""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.data.dataset import SpikeDataset
from src.data.events import Modality
from src.models.architectures import LayerShape, Model, ModelSpec, model_layout, parse_spec
from src.models.evaluate import predict
from src.models.neurons import SpikeActivity, sparsity
from src.utils.errors import AccountingError, ConfigError
from src.utils.logger import get_logger

logger = get_logger(__name__)

WEIGHTED_KINDS = ("linear", "conv", "hgrn", "hopfield")


class OpsReport(BaseModel):
    """
    Per-sample operation counts. ``snn_synops`` is the dataset mean rounded to
    a whole synop; ``snn_synops_total`` is the exact count over all samples and
    the ratios use the unrounded mean.
    """

    model_config = ConfigDict(ser_json_inf_nan="constants")

    ann_macs: int = Field(ge=0)
    snn_synops: int = Field(ge=0)
    snn_synops_total: int = Field(0, ge=0)
    snn_dense_macs: float = Field(0.0, ge=0)
    sparsity: float
    efficiency_ratio: float
    efficiency_ratio_total: float
    samples: int = 0
    flags: list[str] = []


def layer_macs(layer: LayerShape) -> int:
    """Dense multiply-accumulates for one sample at one timestep."""
    if layer.kind == "linear":
        return int(layer.in_shape[-1] * layer.out_shape[-1])
    if layer.kind == "conv":
        c_in = layer.in_shape[0]
        return int(np.prod(layer.out_shape)) * c_in * layer.kernel_size**2
    if layer.kind == "hgrn":
        d_in, d = layer.in_shape[-1], layer.out_shape[-1]
        return 2 * d_in * d + d * d
    if layer.kind == "hopfield":
        return 2 * layer.n_patterns * layer.in_shape[-1] * max(layer.iters, 1)
    return 0


def ann_macs(layers: list[LayerShape], timesteps: int) -> int:
    return timesteps * sum(layer_macs(layer) for layer in layers)


def count_ann_macs(spec: ModelSpec | dict, modality: Modality | str | None = None) -> int:
    """MACs of the matched dense network over the full sequence, per sample."""
    spec = parse_spec(spec)
    layers = model_layout(spec, modality)
    modality = Modality(modality) if modality is not None else spec.modality
    return ann_macs(layers, spec.dims.bins(modality))


def _coverage(size: int, kernel: int, stride: int, padding: int) -> np.ndarray:
    """How many output windows read each input index along one axis."""
    n_out = (size + 2 * padding - kernel) // stride + 1
    cover = np.zeros(size, dtype=np.int64)
    for o in range(n_out):
        lo = max(o * stride - padding, 0)
        hi = min(o * stride - padding + kernel, size)
        if hi > lo:
            cover[lo:hi] += 1
    return cover


def fanout_map(layer: LayerShape) -> int | np.ndarray:
    """
    Outgoing connections of one presynaptic neuron into ``layer``.

    A scalar for dense layers; for convolutions an array shaped like the
    layer input, since border pixels feed fewer windows.
    """
    if layer.kind == "linear":
        return int(layer.out_shape[-1])
    if layer.kind == "conv":
        c_in, h, w = layer.in_shape
        c_out = layer.out_shape[0]
        k, s, p = layer.kernel_size, layer.stride, layer.padding
        per_pixel = np.outer(_coverage(h, k, s, p), _coverage(w, k, s, p)) * c_out
        return np.broadcast_to(per_pixel, (c_in, h, w))
    if layer.kind == "hgrn":
        return 2 * int(layer.out_shape[-1])
    if layer.kind == "hopfield":
        return int(layer.n_patterns)
    raise AccountingError(f"Layer {layer.name} of kind {layer.kind} has no synapses")


def _weighted(layout: list[LayerShape], activity: SpikeActivity) -> list[LayerShape]:
    names = {layer.name for layer in layout}
    unknown = set(activity.inputs) - names
    if unknown:
        raise AccountingError(f"Activity recorded for layers not in the layout: {sorted(unknown)}")
    rows = [layer for layer in layout if layer.kind in WEIGHTED_KINDS]
    for layer in rows:
        rec = activity.inputs.get(layer.name)
        if rec is None:
            raise AccountingError(f"No recorded input for layer {layer.name}")
        if tuple(rec.counts.shape) != tuple(layer.in_shape):
            raise AccountingError(f"{layer.name}: recorded input {rec.counts.shape} vs layout {layer.in_shape}")
    return rows


def _layout(spec_or_layout, modality) -> list[LayerShape]:
    if isinstance(spec_or_layout, list):
        return spec_or_layout
    return model_layout(spec_or_layout, modality)


def count_snn_synops(
    activity: SpikeActivity,
    spec: ModelSpec | dict | list[LayerShape],
    modality: Modality | str | None = None,
) -> int:
    """
    Synaptic operations over everything recorded in ``activity``.

    Sum over weighted layers with binary input of (spikes into the layer)
    times (fan-out of the presynaptic neuron).
    """
    total = 0
    for layer in _weighted(_layout(spec, modality), activity):
        rec = activity.inputs[layer.name]
        if not rec.binary:
            continue
        fanout = fanout_map(layer)
        total += int(np.sum(rec.counts * fanout)) if isinstance(fanout, np.ndarray) else int(rec.counts.sum()) * fanout
    return total


def count_dense_macs(
    activity: SpikeActivity,
    spec: ModelSpec | dict | list[LayerShape],
    modality: Modality | str | None = None,
) -> int:
    """MACs that remain dense in the spiking network: real-valued inputs and recurrent state."""
    total = 0
    for layer in _weighted(_layout(spec, modality), activity):
        rec = activity.inputs[layer.name]
        evaluations = rec.timesteps * rec.batch
        if not rec.binary:
            total += evaluations * layer_macs(layer)
        elif layer.kind == "hgrn":
            d = layer.out_shape[-1]
            total += evaluations * d * d
        elif layer.kind == "hopfield":
            n, d = layer.n_patterns, layer.in_shape[-1]
            total += evaluations * (n * d + (max(layer.iters, 1) - 1) * 2 * n * d)
    return total


def efficiency_report(
    model: Model,
    dataset: SpikeDataset,
    batch_size: int = 64,
) -> OpsReport:
    """
    Per-sample operation counts of ``model`` over ``dataset``.

    Returns:
        OpsReport: ``efficiency_ratio`` = ann_macs / snn_synops (+inf with a
        flag when no spikes reach a synapse) and ``efficiency_ratio_total``,
        which also charges the dense MACs.
    """
    if len(dataset) == 0:
        raise ConfigError("Cannot account energy on an empty dataset")
    modality = dataset.modality
    _, activity = predict(model, dataset, batch_size)
    n = len(dataset)
    ann = count_ann_macs(model.spec, modality)
    synops_total = count_snn_synops(activity, model.spec, modality)
    synops = synops_total / n
    dense = count_dense_macs(activity, model.spec, modality) / n

    flags = []
    if synops > 0:
        ratio = ann / synops
    else:
        ratio = float("inf")
        flags.append("zero_synops")
    total_ops = synops + dense
    ratio_total = ann / total_ops if total_ops > 0 else float("inf")
    report = OpsReport(
        ann_macs=ann,
        snn_synops=int(round(synops)),
        snn_synops_total=synops_total,
        snn_dense_macs=dense,
        sparsity=sparsity(activity),
        efficiency_ratio=ratio,
        efficiency_ratio_total=ratio_total,
        samples=n,
        flags=flags,
    )
    logger.info(
        f"⚡ Ops [{model.spec.memory.value}/{Modality(modality).value}] ANN MACs={ann:,} "
        f"SNN synops={synops:,.0f} ratio={ratio:.1f}x sparsity={report.sparsity:.4f}"
    )
    return report
