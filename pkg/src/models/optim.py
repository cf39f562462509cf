from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from src.kernel.tensor import Tensor
from src.utils.errors import ShapeError
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class OptimState:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    warnings: list[str] = field(default_factory=list)


def adamw_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray | None],
    st: OptimState,
) -> OptimState:
    """
    One AdamW update with bias-corrected moments and decoupled weight decay.

        theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta

    Parameters without a gradient are left alone. A non-finite gradient skips
    that parameter (moments untouched) and records a warning; the step still counts.

    Args:
        params: Name -> parameter tensor, updated in place.
        grads: Name -> gradient array (or None).
        st (OptimState): Hyperparameters and moment buffers.

    Returns:
        OptimState: ``st``, advanced by one step.
    """
    st.step += 1
    bias1 = 1.0 - st.beta1**st.step
    bias2 = 1.0 - st.beta2**st.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            msg = f"step {st.step}: non-finite gradient for {name}, update skipped"
            st.warnings.append(msg)
            logger.warning(f"⚠️ {msg}")
            continue

        m = st.m.get(name)
        v = st.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = st.beta1 * m + (1.0 - st.beta1) * g
        v = st.beta2 * v + (1.0 - st.beta2) * (g * g)
        st.m[name], st.v[name] = m, v

        m_hat = m / bias1
        v_hat = v / bias2
        theta = p.data
        update = st.lr * m_hat / (np.sqrt(v_hat) + st.eps) + st.lr * st.weight_decay * theta
        p.data = (theta - update).astype(theta.dtype, copy=False)
    return st
