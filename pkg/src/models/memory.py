"""
Memory mechanisms at the feature level: supervised contrastive loss,
Hopfield associative memory and the HGRN gated recurrent cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp as _logsumexp

import src.kernel.functional as F
from src.kernel.tensor import Tensor
from src.models.layers import layer_rng, scaled_normal
from src.utils.errors import ConfigError, DegenerateBatchError, ShapeError


# --- supervised contrastive loss -------------------------------------------

@dataclass(frozen=True)
class SCLConfig:
    tau: float = 0.1
    weight: float = 0.5

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ConfigError(f"SCL temperature must be > 0, got {self.tau}")
        if self.weight < 0:
            raise ConfigError(f"SCL weight must be >= 0, got {self.weight}")


def scl_loss(z: Tensor, labels: np.ndarray, cfg: SCLConfig = SCLConfig()) -> Tensor:
    """
    Supervised contrastive loss with positives summed inside the log.

    For each anchor i with at least one positive P(i):

        L_i = -log( sum_{j in P(i)} exp(z_i.z_j / tau) / sum_{k != i} exp(z_i.z_k / tau) )

    Features are l2-normalized first. The result is the mean of L_i over
    anchors that have positives; with no such anchor it is 0.

    Args:
        z (Tensor): Features of shape (B, d).
        labels (np.ndarray): Integer labels of shape (B,).
        cfg (SCLConfig): Temperature (and the weight used by the training loop).

    Returns:
        Tensor: Scalar loss.
    """
    labels = np.asarray(labels).reshape(-1)
    if z.ndim != 2 or z.shape[0] != len(labels):
        raise ShapeError(f"scl_loss: features {z.shape} vs labels {labels.shape}")
    n = z.shape[0]
    if n < 2:
        raise DegenerateBatchError(f"scl_loss needs a batch of at least 2, got {n}")

    zn = F.l2_normalize(z, axis=1)
    sim = (zn @ zn.T) * (1.0 / cfg.tau)
    others = ~np.eye(n, dtype=bool)
    positives = (labels[:, None] == labels[None, :]) & others
    anchors = np.flatnonzero(positives.any(axis=1))
    if anchors.size == 0:
        return sim.sum() * 0.0

    per_anchor = F.logsumexp(sim, axis=1, mask=others) - F.logsumexp(sim, axis=1, mask=positives)
    return per_anchor[anchors].mean()


# --- Hopfield associative memory -------------------------------------------

@dataclass
class HopfieldMemory:
    """
    Learnable pattern matrix P (n_patterns, dim) with inverse temperature beta.

    Retrieval iterates xi <- softmax(beta * xi P^T) P.
    """

    patterns: Tensor
    beta: float
    iters: int = 1
    name: str = "memory.hopfield"

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ConfigError(f"Hopfield beta must be > 0, got {self.beta}")
        if self.iters < 1:
            raise ConfigError(f"Hopfield iters must be >= 1, got {self.iters}")

    @classmethod
    def init(
        cls,
        n_patterns: int = 256,
        dim: int = 512,
        seed: int = 0,
        beta: float | None = None,
        iters: int = 1,
        name: str = "memory.hopfield",
        dtype=np.float64,
    ) -> HopfieldMemory:
        rng = layer_rng(seed, name)
        patterns = scaled_normal(rng, (n_patterns, dim), dim, 1.0, dtype)
        return cls(patterns, beta if beta is not None else 1.0 / np.sqrt(dim), iters, name)

    @property
    def n_patterns(self) -> int:
        return self.patterns.shape[0]

    @property
    def dim(self) -> int:
        return self.patterns.shape[1]

    def params(self) -> dict[str, Tensor]:
        return {f"{self.name}.patterns": self.patterns}


def hopfield_retrieve(xi: Tensor, mem: HopfieldMemory, iters: int | None = None) -> Tensor:
    squeeze = xi.ndim == 1
    if squeeze:
        xi = xi.reshape(1, -1)
    if xi.shape[-1] != mem.dim:
        raise ShapeError(f"hopfield_retrieve: query dim {xi.shape[-1]} != pattern dim {mem.dim}")
    for _ in range(iters or mem.iters):
        weights = F.softmax((xi @ mem.patterns.T) * mem.beta, axis=-1)
        xi = weights @ mem.patterns
    return xi.reshape(-1) if squeeze else xi


def hopfield_energy(xi: Tensor | np.ndarray, mem: HopfieldMemory) -> tuple[float, float]:
    """
    Quadratic and log-sum-exp energies of a single state.

    Returns:
        tuple[float, float]: (-xi^T P^T P xi, -(1/beta) logsumexp(beta P xi) + 0.5 xi^T xi)
    """
    x = np.asarray(xi.data if isinstance(xi, Tensor) else xi, dtype=np.float64).reshape(-1)
    P = mem.patterns.data.astype(np.float64)
    if x.shape[0] != P.shape[1]:
        raise ShapeError(f"hopfield_energy: state dim {x.shape[0]} != pattern dim {P.shape[1]}")
    proj = P @ x
    quadratic = -float(proj @ proj)
    modern = -float(_logsumexp(mem.beta * proj)) / mem.beta + 0.5 * float(x @ x)
    return quadratic, modern


# --- HGRN gated recurrence -------------------------------------------------

@dataclass
class HGRNCell:
    W_r: Tensor
    U_r: Tensor
    W_h: Tensor
    b_r: Tensor
    b_h: Tensor
    name: str = "memory.hgrn"

    @classmethod
    def init(cls, in_features: int, hidden: int, seed: int = 0, name: str = "memory.hgrn", dtype=np.float64) -> HGRNCell:
        rng = layer_rng(seed, name)
        return cls(
            W_r=scaled_normal(rng, (in_features, hidden), in_features, 1.0, dtype),
            U_r=scaled_normal(rng, (hidden, hidden), hidden, 1.0, dtype),
            W_h=scaled_normal(rng, (in_features, hidden), in_features, 1.0, dtype),
            b_r=Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True),
            b_h=Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True),
            name=name,
        )

    @property
    def in_features(self) -> int:
        return self.W_r.shape[0]

    @property
    def hidden(self) -> int:
        return self.U_r.shape[0]

    def params(self) -> dict[str, Tensor]:
        return {f"{self.name}.{k}": getattr(self, k) for k in ("W_r", "U_r", "W_h", "b_r", "b_h")}


def hgrn_step(x_t: Tensor, h_prev: Tensor, cell: HGRNCell) -> Tensor:
    """r = sigmoid(x W_r + h U_r + b_r); h = (1 - r) * h + r * tanh(x W_h + b_h)."""
    if x_t.shape[-1] != cell.in_features or h_prev.shape[-1] != cell.hidden:
        raise ShapeError(
            f"hgrn_step: x {x_t.shape} / h {h_prev.shape} vs cell ({cell.in_features} -> {cell.hidden})"
        )
    r = (F.linear(x_t, cell.W_r, cell.b_r) + h_prev @ cell.U_r).sigmoid()
    candidate = F.linear(x_t, cell.W_h, cell.b_h).tanh()
    return (1.0 - r) * h_prev + r * candidate


def hgrn_scan(x: Tensor, cell: HGRNCell, h0: Tensor | None = None) -> Tensor:
    """Runs the cell over a (T, B, in) sequence; returns the (T, B, hidden) state trace."""
    steps, batch = x.shape[0], x.shape[1]
    if x.shape[-1] != cell.in_features:
        raise ShapeError(f"hgrn_scan: input width {x.shape[-1]} != {cell.in_features}")
    flat = x.reshape(steps * batch, x.shape[-1])
    gate_in = F.linear(flat, cell.W_r, cell.b_r).reshape(steps, batch, cell.hidden)
    candidate = F.linear(flat, cell.W_h, cell.b_h).tanh().reshape(steps, batch, cell.hidden)
    h = h0 if h0 is not None else Tensor(np.zeros((batch, cell.hidden), dtype=x.dtype))
    trace = []
    for t in range(steps):
        r = (gate_in[t] + h @ cell.U_r).sigmoid()
        h = (1.0 - r) * h + r * candidate[t]
        trace.append(h)
    return F.stack(trace, axis=0)
