from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

import src.kernel.functional as F
from src.kernel.tensor import Tensor
from src.models.neurons import LIFParams, LIFState, SpikeActivity, SpikeMode, SurrogateParams, lif_step
from src.utils.errors import ShapeError


def layer_rng(seed: int, name: str) -> np.random.Generator:
    """Generator keyed by (seed, layer name), so equally named layers initialize identically."""
    return np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])


def scaled_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, gain: float, dtype) -> Tensor:
    return Tensor(rng.normal(0.0, gain / np.sqrt(fan_in), size=shape).astype(dtype), requires_grad=True)


class Layer:
    name: str
    weighted = False
    spiking = False

    def params(self) -> dict[str, Tensor]:
        return {}

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return input_shape

    def __call__(self, x: Tensor) -> Tensor:
        raise NotImplementedError


class Linear(Layer):
    weighted = True

    def __init__(self, name: str, in_features: int, out_features: int, seed: int = 0, gain: float = 1.0, dtype=np.float64):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        self.weight = scaled_normal(layer_rng(seed, name), (in_features, out_features), in_features, gain, dtype)
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def params(self) -> dict[str, Tensor]:
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def output_shape(self, input_shape):
        if input_shape[-1] != self.in_features:
            raise ShapeError(f"{self.name}: expects {self.in_features} features, got {input_shape}")
        return (*input_shape[:-1], self.out_features)

    def __call__(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Conv2d(Layer):
    weighted = True

    def __init__(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        kernel_size: int = 3,
        stride: int = 1,
        padding: int = 1,
        seed: int = 0,
        gain: float = 1.0,
        dtype=np.float64,
    ):
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.weight = scaled_normal(layer_rng(seed, name), shape, fan_in, gain, dtype)
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)

    def params(self) -> dict[str, Tensor]:
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def output_shape(self, input_shape):
        c, h, w = input_shape
        if c != self.in_channels:
            raise ShapeError(f"{self.name}: expects {self.in_channels} channels, got {c}")
        span_h = h + 2 * self.padding - self.kernel_size
        span_w = w + 2 * self.padding - self.kernel_size
        return (self.out_channels, span_h // self.stride + 1, span_w // self.stride + 1)

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class MaxPool2d(Layer):
    def __init__(self, name: str, size: int = 2):
        self.name = name
        self.size = size

    def output_shape(self, input_shape):
        c, h, w = input_shape
        return (c, h // self.size, w // self.size)

    def __call__(self, x: Tensor) -> Tensor:
        return F.max_pool2d(x, self.size)


class Flatten(Layer):
    def __init__(self, name: str):
        self.name = name

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def __call__(self, x: Tensor) -> Tensor:
        return x.reshape(x.shape[0], -1)


class LIFLayer(Layer):
    """Marker for a spiking stage; dynamics come from the stack's LIFParams."""

    spiking = True

    def __init__(self, name: str):
        self.name = name


@dataclass
class LayerStack:
    name: str
    input_shape: tuple[int, ...]
    layers: list[Layer]

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for layer in self.layers:
            out.update(layer.params())
        return out

    def shapes(self) -> list[tuple[Layer, tuple[int, ...], tuple[int, ...]]]:
        """(layer, per-sample input shape, per-sample output shape) for every layer."""
        rows, shape = [], tuple(self.input_shape)
        for layer in self.layers:
            out = layer.output_shape(shape)
            rows.append((layer, shape, out))
            shape = out
        return rows

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes()[-1][2] if self.layers else tuple(self.input_shape)


def run_sequence(
    stack: LayerStack,
    x: Tensor | np.ndarray,
    p: LIFParams = LIFParams(),
    sp: SurrogateParams = SurrogateParams(),
    mode: SpikeMode | str = SpikeMode.HARD,
    activity: SpikeActivity | None = None,
) -> tuple[Tensor, SpikeActivity]:
    """
    Unrolls a layer stack over all timesteps.

    Stateless layers run once on the time-folded batch; each LIF layer keeps
    its own membrane state across timesteps.

    Args:
        stack (LayerStack): Layers and their declared per-sample input shape.
        x (Tensor | np.ndarray): Input of shape (T, B, *input_shape).
        p (LIFParams): Constants shared by every LIF layer.
        sp (SurrogateParams): Surrogate sharpness.
        mode (SpikeMode): hard or soft spiking.
        activity (SpikeActivity | None): Recorder to extend, a fresh one by default.

    Returns:
        tuple[Tensor, SpikeActivity]: Per-timestep output (T, B, *output_shape)
        and the recorded spike activity.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim < 2 or tuple(x.shape[2:]) != tuple(stack.input_shape):
        raise ShapeError(f"{stack.name}: expected (T, B, *{tuple(stack.input_shape)}), got {x.shape}")
    activity = activity if activity is not None else SpikeActivity()
    steps, batch = x.shape[0], x.shape[1]
    activity.samples = max(activity.samples, batch)

    current = x
    for layer in stack.layers:
        if layer.weighted:
            activity.record_input(layer.name, current.data)
        if layer.spiking:
            state = LIFState.rest(current.shape[1:], p, current.dtype)
            trace = []
            for t in range(steps):
                s, state = lif_step(state, current[t], p, sp, mode)
                trace.append(s)
            current = F.stack(trace, axis=0)
            activity.record_spikes(layer.name, current.data, int(np.prod(current.shape[1:])))
        else:
            folded = current.reshape(steps * batch, *current.shape[2:])
            out = layer(folded)
            current = out.reshape(steps, batch, *out.shape[1:])
    return current, activity
