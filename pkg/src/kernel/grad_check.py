from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from src.kernel.tensor import Tensor, no_grad
from src.utils.errors import GradCheckError
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    n_checked: int
    worst: tuple[str, tuple[int, ...]] | None = None
    errors: dict[str, float] = field(default_factory=dict)


def _evaluate(f: Callable[[], Tensor], what: str) -> float:
    with no_grad():
        value = f()
    value = value.item() if isinstance(value, Tensor) else float(value)
    if not np.isfinite(value):
        raise GradCheckError(f"❌ Non-finite loss while checking {what}: {value}")
    return value


def grad_check(
    f: Callable[[], Tensor],
    theta: Tensor | Mapping[str, Tensor],
    eps: float = 1e-6,
    tol: float = 1e-4,
    atol: float = 1e-6,
    max_coords: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """
    Compare analytic gradients with central finite differences.

    ``f`` closes over the parameters and must be deterministic. Each checked
    coordinate is perturbed in place by ±eps and restored afterwards.

    Args:
        f: Zero-argument callable returning a scalar Tensor.
        theta: One tensor or a name → tensor mapping of parameters to check.
        eps (float): Perturbation size.
        tol (float): Maximum accepted relative error.
        atol (float): Floor on the error denominator, so near-zero gradients
            are compared in absolute terms.
        max_coords (int | None): Per-tensor cap on checked coordinates, drawn
            without replacement with ``seed``.
        seed (int): Sampling seed.

    Returns:
        GradCheckReport: Worst relative error across all checked coordinates.
    """
    params = {"theta": theta} if isinstance(theta, Tensor) else dict(theta)
    for p in params.values():
        p.data = np.ascontiguousarray(p.data)
        p.requires_grad = True
        p.zero_grad()

    loss = f()
    if not np.isfinite(loss.data).all():
        raise GradCheckError(f"❌ Non-finite loss before gradient check: {loss.data}")
    loss.backward()

    rng = np.random.default_rng(seed)
    worst_err, worst_at, n_checked = 0.0, None, 0
    per_param: dict[str, float] = {}
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        if not np.isfinite(analytic).all():
            raise GradCheckError(f"❌ Non-finite analytic gradient for {name}")
        coords = np.arange(p.data.size)
        if max_coords is not None and coords.size > max_coords:
            coords = np.sort(rng.choice(coords, size=max_coords, replace=False))

        flat = p.data.reshape(-1)
        grad_flat = analytic.reshape(-1)
        param_err = 0.0
        for c in coords:
            original = flat[c]
            flat[c] = original + eps
            up = _evaluate(f, name)
            flat[c] = original - eps
            down = _evaluate(f, name)
            flat[c] = original
            numeric = (up - down) / (2.0 * eps)
            a = float(grad_flat[c])
            err = abs(a - numeric) / max(abs(a) + abs(numeric), atol)
            if err > param_err:
                param_err = err
            if err > worst_err:
                worst_err, worst_at = err, (name, np.unravel_index(c, p.shape))
            n_checked += 1
        per_param[name] = param_err

    passed = worst_err < tol
    if not passed:
        logger.warning(f"⚠️ Gradient check failed: max relative error {worst_err:.3e} at {worst_at}")
    return GradCheckReport(worst_err, passed, n_checked, worst_at, per_param)
