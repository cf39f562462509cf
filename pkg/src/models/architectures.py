"""
MODEL ZOO - declarative specs and the spiking architectures they build
=====================================================================

Visual:  Conv(2,c1) -> LIF -> pool -> Conv(c1,c2) -> LIF -> pool -> FC(d) -> LIF -> Memory -> FC(C)
Audio:   FC(700,h1) -> LIF -> FC(h1,h2) -> LIF -> FC(h2,d) -> LIF -> Memory -> FC(C)
Dual:    one encoder per modality -> shared HGRN (+ Hopfield for hybrid) -> shared FC(C)

Memory kinds (M1-M5): none, scl (training loss only), hopfield, hgrn, hybrid
(HGRN then Hopfield, with SCL). Logits are the time-mean of the head output.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

import src.kernel.functional as F
from src.data.events import Modality, SpikeTensor
from src.kernel.tensor import Tensor
from src.models.layers import Conv2d, Flatten, LayerStack, LIFLayer, Linear, MaxPool2d, run_sequence
from src.models.memory import HGRNCell, HopfieldMemory, SCLConfig, hgrn_scan, hopfield_retrieve, scl_loss
from src.models.neurons import LIFParams, SpikeActivity, SpikeMode, SurrogateParams
from src.utils.errors import ConfigError, ShapeError


class MemoryKind(str, Enum):
    NONE = "none"
    SCL = "scl"
    HOPFIELD = "hopfield"
    HGRN = "hgrn"
    HYBRID = "hybrid"

    @property
    def uses_scl(self) -> bool:
        return self in (MemoryKind.SCL, MemoryKind.HYBRID)

    @property
    def uses_hgrn(self) -> bool:
        return self in (MemoryKind.HGRN, MemoryKind.HYBRID)

    @property
    def uses_hopfield(self) -> bool:
        return self in (MemoryKind.HOPFIELD, MemoryKind.HYBRID)


MODEL_ZOO: dict[str, MemoryKind] = {
    "M1": MemoryKind.NONE,
    "M2": MemoryKind.SCL,
    "M3": MemoryKind.HOPFIELD,
    "M4": MemoryKind.HGRN,
    "M5": MemoryKind.HYBRID,
}


# === SPEC SCHEMAS ===

class ModelDims(BaseModel):
    """Layer widths and input geometry; defaults are the full-size networks."""

    model_config = ConfigDict(extra="forbid")

    conv_channels: tuple[int, int] = (64, 128)
    kernel_size: int = Field(3, ge=1)
    hidden: tuple[int, int] = (1024, 1024)
    feature_dim: int = Field(512, ge=1)
    n_patterns: int = Field(256, ge=1)
    visual_bins: int = Field(25, ge=1)
    visual_size: int = Field(34, ge=4)
    polarities: int = Field(2, ge=1)
    audio_bins: int = Field(100, ge=1)
    audio_channels: int = Field(700, ge=1)

    @property
    def pooled_size(self) -> int:
        return (self.visual_size // 2) // 2

    @property
    def visual_input(self) -> tuple[int, int, int]:
        return (self.polarities, self.visual_size, self.visual_size)

    def bins(self, modality: Modality) -> int:
        return self.visual_bins if Modality(modality) is Modality.VISUAL else self.audio_bins


class LIFConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tau_m: float = 2.0
    u_rest: float = 0.0
    r: float = 1.0
    theta: float = 1.0
    dt: float = 1.0

    def to_params(self) -> LIFParams:
        return LIFParams(self.tau_m, self.u_rest, self.r, self.theta, self.dt)


class ModelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    modality: Modality
    memory: MemoryKind = MemoryKind.NONE
    num_classes: int = Field(10, ge=2)
    dims: ModelDims = ModelDims()
    lif: LIFConfig = LIFConfig()
    surrogate_alpha: float = Field(10.0, gt=0)
    hopfield_beta: float | None = Field(None, gt=0)
    hopfield_iters: int = Field(1, ge=1)
    hopfield_residual: bool = False
    init_gain: float = Field(2.0, gt=0)
    dtype: Literal["float32", "float64"] = "float64"

    @model_validator(mode="after")
    def _dual_needs_hgrn(self) -> ModelSpec:
        if self.modality is Modality.DUAL and not self.memory.uses_hgrn:
            raise ValueError("dual modality requires an hgrn-backed trunk (memory hgrn or hybrid)")
        return self

    @property
    def beta(self) -> float:
        return self.hopfield_beta if self.hopfield_beta is not None else 1.0 / np.sqrt(self.dims.feature_dim)

    @property
    def modalities(self) -> list[Modality]:
        if self.modality is Modality.DUAL:
            return [Modality.VISUAL, Modality.AUDIO]
        return [self.modality]


def parse_spec(spec: ModelSpec | dict) -> ModelSpec:
    if isinstance(spec, ModelSpec):
        return spec
    try:
        return ModelSpec.model_validate(spec)
    except ValidationError as exc:
        raise ConfigError(f"Invalid model spec: {exc}") from exc


# === LAYOUT ===

@dataclass(frozen=True)
class LayerShape:
    """Static description of one stage: kind plus per-sample input/output shapes."""

    name: str
    kind: str
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    kernel_size: int = 0
    stride: int = 1
    padding: int = 0
    n_patterns: int = 0
    iters: int = 0


def _encoder_layers(modality: Modality, spec: ModelSpec, seed: int) -> LayerStack:
    d = spec.dims
    dtype = np.dtype(spec.dtype)
    g = spec.init_gain
    if modality is Modality.VISUAL:
        c1, c2 = d.conv_channels
        k, pad = d.kernel_size, d.kernel_size // 2
        layers = [
            Conv2d("visual.conv1", d.polarities, c1, k, 1, pad, seed, g, dtype),
            LIFLayer("visual.lif1"),
            MaxPool2d("visual.pool1"),
            Conv2d("visual.conv2", c1, c2, k, 1, pad, seed, g, dtype),
            LIFLayer("visual.lif2"),
            MaxPool2d("visual.pool2"),
            Flatten("visual.flatten"),
            Linear("visual.fc", c2 * d.pooled_size**2, d.feature_dim, seed, g, dtype),
            LIFLayer("visual.lif3"),
        ]
        return LayerStack("visual", d.visual_input, layers)

    h1, h2 = d.hidden
    layers = [
        Linear("audio.fc1", d.audio_channels, h1, seed, g, dtype),
        LIFLayer("audio.lif1"),
        Linear("audio.fc2", h1, h2, seed, g, dtype),
        LIFLayer("audio.lif2"),
        Linear("audio.fc3", h2, d.feature_dim, seed, g, dtype),
        LIFLayer("audio.lif3"),
    ]
    return LayerStack("audio", (d.audio_channels,), layers)


def _kind(layer) -> str:
    return {Conv2d: "conv", Linear: "linear", LIFLayer: "lif", MaxPool2d: "pool", Flatten: "flatten"}[type(layer)]


def model_layout(spec: ModelSpec | dict, modality: Modality | str | None = None) -> list[LayerShape]:
    """
    Ordered stages one sample passes through, for the given input modality.

    Dual specs need ``modality`` to pick the encoder.
    """
    spec = parse_spec(spec)
    if modality is None:
        if spec.modality is Modality.DUAL:
            raise ConfigError("model_layout of a dual spec needs a modality")
        modality = spec.modality
    modality = Modality(modality)
    d = spec.dims.feature_dim

    stack = _encoder_layers(modality, spec, seed=0)
    rows = [
        LayerShape(
            layer.name,
            _kind(layer),
            in_s,
            out_s,
            kernel_size=getattr(layer, "kernel_size", 0),
            stride=getattr(layer, "stride", 1),
            padding=getattr(layer, "padding", 0),
        )
        for layer, in_s, out_s in stack.shapes()
    ]
    if spec.memory.uses_hgrn:
        rows.append(LayerShape("memory.hgrn", "hgrn", (d,), (d,)))
    if spec.memory.uses_hopfield:
        rows.append(
            LayerShape("memory.hopfield", "hopfield", (d,), (d,), n_patterns=spec.dims.n_patterns, iters=spec.hopfield_iters)
        )
    rows.append(LayerShape("head", "linear", (d,), (spec.num_classes,)))
    return rows


def parameter_count(spec: ModelSpec | dict) -> int:
    """Closed-form number of trainable scalars."""
    spec = parse_spec(spec)
    dm = spec.dims
    d, C = dm.feature_dim, spec.num_classes
    total = d * C + C
    for modality in spec.modalities:
        if modality is Modality.VISUAL:
            c1, c2 = dm.conv_channels
            k = dm.kernel_size
            total += c1 * dm.polarities * k * k + c1
            total += c2 * c1 * k * k + c2
            total += c2 * dm.pooled_size**2 * d + d
        else:
            h1, h2 = dm.hidden
            total += dm.audio_channels * h1 + h1 + h1 * h2 + h2 + h2 * d + d
    if spec.memory.uses_hgrn:
        total += 3 * d * d + 2 * d
    if spec.memory.uses_hopfield:
        total += dm.n_patterns * d
    return total


# === MODEL ===

@dataclass
class ForwardResult:
    logits: Tensor
    features: Tensor
    spikes: np.ndarray
    activity: SpikeActivity


class Model:
    def __init__(self, spec: ModelSpec, seed: int):
        self.spec = spec
        self.seed = seed
        dtype = np.dtype(spec.dtype)
        d = spec.dims
        self.encoders: dict[Modality, LayerStack] = {
            m: _encoder_layers(m, spec, seed) for m in spec.modalities
        }
        self.hgrn = (
            HGRNCell.init(d.feature_dim, d.feature_dim, seed, "memory.hgrn", dtype) if spec.memory.uses_hgrn else None
        )
        self.hopfield = (
            HopfieldMemory.init(d.n_patterns, d.feature_dim, seed, spec.beta, spec.hopfield_iters, "memory.hopfield", dtype)
            if spec.memory.uses_hopfield
            else None
        )
        self.head = Linear("head", d.feature_dim, spec.num_classes, seed, 1.0, dtype)
        self.lif_params = spec.lif.to_params()
        self.surrogate = SurrogateParams(spec.surrogate_alpha)

    def encoder_params(self, modality: Modality | str) -> dict[str, Tensor]:
        return self.encoders[Modality(modality)].params()

    def trunk_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.hgrn is not None:
            out.update(self.hgrn.params())
        if self.hopfield is not None:
            out.update(self.hopfield.params())
        out.update(self.head.params())
        return out

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for modality in self.encoders:
            out.update(self.encoder_params(modality))
        out.update(self.trunk_params())
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params().values())

    def zero_grad(self) -> None:
        for p in self.params().values():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.params()
        missing = params.keys() - state.keys()
        if missing:
            raise ShapeError(f"State is missing tensors: {sorted(missing)}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ShapeError(f"{name}: stored shape {state[name].shape} != model shape {p.shape}")
            p.data = np.array(state[name], dtype=p.dtype)

    def __repr__(self) -> str:
        return f"Model({self.spec.modality.value}, memory={self.spec.memory.value}, params={self.num_parameters()})"


def build_model(spec: ModelSpec | dict, seed: int = 0) -> Model:
    """
    Instantiates the stack described by ``spec``.

    Initialization is deterministic per (seed, layer name): encoders draw from
    N(0, (init_gain / sqrt(fan_in))^2), memory and head weights use gain 1,
    biases start at zero.
    """
    return Model(parse_spec(spec), seed)


def _as_time_major(model: Model, x, modality: Modality) -> tuple[Tensor, bool]:
    if isinstance(x, SpikeTensor):
        if x.modality is not modality:
            raise ShapeError(f"{x.modality.value} input given to the {modality.value} path")
        x = x.data
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    sample_shape = tuple(model.encoders[modality].input_shape)
    bins = model.spec.dims.bins(modality)
    dtype = np.dtype(model.spec.dtype)
    if arr.ndim == len(sample_shape) + 1 and tuple(arr.shape[1:]) == sample_shape:
        return Tensor(arr.astype(dtype)[:, None]), True
    if arr.ndim == len(sample_shape) + 2 and tuple(arr.shape[2:]) == sample_shape:
        return Tensor(arr.astype(dtype)), False
    raise ShapeError(
        f"Input {arr.shape} does not match the {modality.value} shape ({bins}, [batch], {sample_shape})"
    )


def _memory_block(model: Model, feats: Tensor, activity: SpikeActivity) -> Tensor:
    steps, batch, d = feats.shape
    if model.hgrn is not None:
        activity.record_input("memory.hgrn", feats.data)
        feats = hgrn_scan(feats, model.hgrn)
    if model.hopfield is not None:
        activity.record_input("memory.hopfield", feats.data)
        flat = feats.reshape(steps * batch, d)
        retrieved = hopfield_retrieve(flat, model.hopfield)
        if model.spec.hopfield_residual:
            retrieved = flat + retrieved
        feats = retrieved.reshape(steps, batch, d)
    return feats


def forward(
    model: Model,
    x: SpikeTensor | np.ndarray | Tensor,
    modality: Modality | str | None = None,
    mode: SpikeMode | str = SpikeMode.HARD,
) -> ForwardResult:
    """
    Runs one sample (T, ...) or a time-major batch (T, B, ...) through the model.

    Returns:
        ForwardResult: ``logits`` (B, C), ``features`` (B, T, d) taken after the
        memory block, ``spikes`` (B, T, d) of the feature LIF layer, and the
        recorded ``activity``. A single sample drops the batch axis.
    """
    if modality is None:
        if model.spec.modality is Modality.DUAL:
            raise ShapeError("Dual model needs a modality tag")
        modality = x.modality if isinstance(x, SpikeTensor) else model.spec.modality
    modality = Modality(modality)
    if modality not in model.encoders:
        raise ShapeError(f"Model has no {modality.value} encoder")

    xt, single = _as_time_major(model, x, modality)
    encoded, activity = run_sequence(model.encoders[modality], xt, model.lif_params, model.surrogate, mode)
    spikes = encoded.data
    feats = _memory_block(model, encoded, activity)

    activity.record_input("head", feats.data)
    steps, batch, d = feats.shape
    out = model.head(feats.reshape(steps * batch, d)).reshape(steps, batch, model.spec.num_classes)
    logits = out.mean(axis=0)
    features = feats.transpose(1, 0, 2)
    spikes = np.ascontiguousarray(spikes.transpose(1, 0, 2))
    if single:
        return ForwardResult(logits[0], features[0], spikes[0], activity)
    return ForwardResult(logits, features, spikes, activity)


def forward_dual(
    model: Model,
    x: SpikeTensor | np.ndarray | Tensor,
    modality_tag: Modality | str,
    mode: SpikeMode | str = SpikeMode.HARD,
) -> ForwardResult:
    if model.spec.modality is not Modality.DUAL:
        raise ShapeError("forward_dual needs a dual model")
    tag = Modality(modality_tag)
    if tag is Modality.DUAL:
        raise ShapeError("modality_tag must be visual or audio")
    return forward(model, x, tag, mode)


def total_loss(model: Model, result: ForwardResult, labels: np.ndarray, scl_cfg: SCLConfig | None = None) -> Tensor:
    """Cross-entropy on the logits, plus weight * SCL on the time-mean features for scl/hybrid."""
    loss = F.cross_entropy(result.logits, labels)
    if model.spec.memory.uses_scl:
        cfg = scl_cfg or SCLConfig()
        if cfg.weight > 0:
            loss = loss + scl_loss(result.features.mean(axis=1), labels, cfg) * cfg.weight
    return loss
