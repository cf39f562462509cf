"""
Leaky integrate-and-fire dynamics with surrogate-gradient spiking.

Membrane update (forward Euler of tau_m du/dt = -(u - u_rest) + r i):

    u' = u + (dt / tau_m) * (-(u - u_rest) + r * i)
    s  = H(u' - theta)
    u_next = u_rest where s == 1, else u'

In ``hard`` mode the spike is a Heaviside step whose backward pass uses the
fast-sigmoid derivative 1 / (alpha |v| + 1)^2, and the reset is detached.
``soft`` mode swaps in the smooth primitive 0.5 v / (alpha |v| + 1) + 0.5 for
both spike and reset, so whole networks become exactly differentiable for
gradient checking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from src.kernel.tensor import Tensor, check_finite
from src.utils.errors import ConfigError, ShapeError, UndefinedSparsityError


class SpikeMode(str, Enum):
    HARD = "hard"
    SOFT = "soft"


@dataclass(frozen=True)
class LIFParams:
    tau_m: float = 2.0
    u_rest: float = 0.0
    r: float = 1.0
    theta: float = 1.0
    dt: float = 1.0

    def __post_init__(self) -> None:
        if self.tau_m <= 0:
            raise ConfigError(f"tau_m must be > 0, got {self.tau_m}")
        if self.theta <= self.u_rest:
            raise ConfigError(f"theta ({self.theta}) must exceed u_rest ({self.u_rest})")


@dataclass(frozen=True)
class SurrogateParams:
    alpha: float = 10.0

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ConfigError(f"surrogate alpha must be > 0, got {self.alpha}")


@dataclass
class LIFState:
    u: Tensor

    @classmethod
    def rest(cls, shape: tuple[int, ...], p: LIFParams, dtype=np.float64) -> LIFState:
        return cls(Tensor(np.full(shape, p.u_rest, dtype=dtype)))


def surrogate_grad(v: np.ndarray, alpha: float) -> np.ndarray:
    return 1.0 / (alpha * np.abs(v) + 1.0) ** 2


def spike_surrogate(v: Tensor, sp: SurrogateParams, mode: SpikeMode | str = SpikeMode.HARD) -> Tensor:
    if SpikeMode(mode) is SpikeMode.HARD:
        out = (v.data >= 0).astype(v.data.dtype)
        return Tensor.from_op(out, (v,), lambda g: (g * surrogate_grad(v.data, sp.alpha),), "spike")

    out = 0.5 * v.data / (sp.alpha * np.abs(v.data) + 1.0) + 0.5
    return Tensor.from_op(out, (v,), lambda g: (0.5 * g * surrogate_grad(v.data, sp.alpha),), "soft_spike")


def lif_step(
    state: LIFState,
    current: Tensor,
    p: LIFParams = LIFParams(),
    sp: SurrogateParams = SurrogateParams(),
    mode: SpikeMode | str = SpikeMode.HARD,
) -> tuple[Tensor, LIFState]:
    """
    Advances every neuron by one timestep.

    Args:
        state (LIFState): Membrane potentials before the step.
        current (Tensor): Input current, same shape as ``state.u``.
        p (LIFParams): Neuron constants.
        sp (SurrogateParams): Surrogate sharpness.
        mode (SpikeMode): hard (binary spikes) or soft (smooth, for grad checks).

    Returns:
        tuple[Tensor, LIFState]: Spikes and the post-reset state.
    """
    if state.u.shape != current.shape:
        raise ShapeError(f"lif_step: state {state.u.shape} vs input {current.shape}")
    u = state.u
    u_new = u + (-(u - p.u_rest) + current * p.r) * (p.dt / p.tau_m)
    check_finite(u_new.data, "membrane potential")
    spikes = spike_surrogate(u_new - p.theta, sp, mode)
    gate = spikes.detach() if SpikeMode(mode) is SpikeMode.HARD else spikes
    u_next = u_new * (1.0 - gate) + gate * p.u_rest
    return spikes, LIFState(u_next)


@dataclass
class LayerActivity:
    """Spike totals of one LIF layer over a forward pass."""

    name: str
    spikes: int
    neuron_timesteps: int


@dataclass
class LayerInput:
    """
    Presynaptic activity arriving at one weighted layer.

    ``counts`` holds, per input neuron, the summed input over all timesteps and
    batch elements. For binary inputs that is the number of spikes.
    """

    name: str
    counts: np.ndarray
    timesteps: int
    batch: int
    binary: bool


@dataclass
class SpikeActivity:
    layers: dict[str, LayerActivity] = field(default_factory=dict)
    inputs: dict[str, LayerInput] = field(default_factory=dict)
    samples: int = 0

    def record_spikes(self, name: str, spikes: np.ndarray, neurons_per_step: int) -> None:
        steps = spikes.size // max(neurons_per_step, 1)
        self.layers[name] = LayerActivity(name, int(spikes.sum()), steps * neurons_per_step)

    def record_input(self, name: str, x: np.ndarray) -> None:
        """Record a (T, B, ...) presynaptic trace for ``name``."""
        binary = bool(np.all((x == 0) | (x == 1)))
        counts = x.reshape(x.shape[0] * x.shape[1], -1).sum(axis=0).reshape(x.shape[2:])
        self.inputs[name] = LayerInput(name, counts, x.shape[0], x.shape[1], binary)

    @property
    def total_spikes(self) -> int:
        return sum(a.spikes for a in self.layers.values())

    @property
    def total_neuron_timesteps(self) -> int:
        return sum(a.neuron_timesteps for a in self.layers.values())

    def merge(self, other: SpikeActivity) -> SpikeActivity:
        """Sum of two recordings of the same network (e.g. two batches)."""
        merged = SpikeActivity(samples=self.samples + other.samples)
        for name in self.layers.keys() | other.layers.keys():
            a, b = self.layers.get(name), other.layers.get(name)
            if a is None or b is None:
                merged.layers[name] = a or b
            else:
                merged.layers[name] = LayerActivity(name, a.spikes + b.spikes, a.neuron_timesteps + b.neuron_timesteps)
        for name in self.inputs.keys() | other.inputs.keys():
            a, b = self.inputs.get(name), other.inputs.get(name)
            if a is None or b is None:
                merged.inputs[name] = a or b
            else:
                merged.inputs[name] = LayerInput(
                    name, a.counts + b.counts, a.timesteps, a.batch + b.batch, a.binary and b.binary
                )
        return merged


def sparsity(activity: SpikeActivity) -> float:
    """1 - spikes / neuron-timesteps over every recorded LIF layer."""
    total = activity.total_neuron_timesteps
    if total == 0:
        raise UndefinedSparsityError("No neuron-timesteps recorded")
    return 1.0 - activity.total_spikes / total
