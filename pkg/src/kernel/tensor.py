"""
Reverse-mode differentiable tensor on top of numpy.

Operations execute eagerly. Each result that depends on a tensor with
``requires_grad`` remembers its parents and a closure mapping the output
gradient to one gradient per parent. ``Tensor.backward`` builds a ``Graph``
(a topological ordering of everything reachable from the root) and visits it
once in reverse.

Grad recording is per thread: a graph never crosses threads.
"""

from __future__ import annotations

import os
import threading
from contextlib import contextmanager
from typing import Any, Callable, Sequence

import numpy as np
from scipy.special import expit

from src.utils.errors import NumericFault, ShapeError

_local = threading.local()
_DEBUG = os.environ.get("SNN_DEBUG", "0") == "1"


def set_debug(flag: bool) -> None:
    """Toggle finite-value assertions inside the kernel and neuron code."""
    global _DEBUG
    _DEBUG = bool(flag)


def debug_enabled() -> bool:
    return _DEBUG


def check_finite(values: np.ndarray, what: str) -> None:
    if _DEBUG and not np.all(np.isfinite(values)):
        raise NumericFault(f"❌ Non-finite values in {what}")


def is_grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextmanager
def no_grad():
    """Evaluate without recording a graph (evaluation, finite differences)."""
    previous = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


class IndexedGrad:
    """Gradient that is zero everywhere except ``value`` at ``index``."""

    __slots__ = ("index", "value", "basic")

    def __init__(self, index: Any, value: np.ndarray):
        self.index = index
        self.value = value
        self.basic = _is_basic_index(index)


def _is_basic_index(index: Any) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(k, (int, np.integer, slice)) or k is Ellipsis for k in parts)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data: Any, requires_grad: bool = False, name: str | None = None):
        arr = data.data if isinstance(data, Tensor) else np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[Any]] | None = None

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: tuple[Tensor, ...],
        backward: Callable[[np.ndarray], Sequence[Any]],
        op: str,
    ) -> Tensor:
        """Wrap an op result; records the graph edge only when a parent needs it."""
        out = cls(data)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
            out.op = op
        return out

    # --- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # --- differentiation -----------------------------------------------
    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() needs an explicit gradient for shape {self.shape}")
            grad = np.ones_like(self.data)
        Graph(self).backward(np.asarray(grad, dtype=self.data.dtype))

    # --- arithmetic ----------------------------------------------------
    def _lift(self, other: Any) -> Tensor:
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other: Any) -> Tensor:
        b = self._lift(other)
        a = self

        def backward(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return Tensor.from_op(a.data + b.data, (a, b), backward, "add")

    __radd__ = __add__

    def __sub__(self, other: Any) -> Tensor:
        b = self._lift(other)
        a = self

        def backward(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

        return Tensor.from_op(a.data - b.data, (a, b), backward, "sub")

    def __rsub__(self, other: Any) -> Tensor:
        return self._lift(other) - self

    def __mul__(self, other: Any) -> Tensor:
        b = self._lift(other)
        a = self

        def backward(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return Tensor.from_op(a.data * b.data, (a, b), backward, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> Tensor:
        b = self._lift(other)
        a = self

        def backward(g):
            ga = g / b.data
            gb = -g * a.data / (b.data * b.data)
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

        return Tensor.from_op(a.data / b.data, (a, b), backward, "div")

    def __rtruediv__(self, other: Any) -> Tensor:
        return self._lift(other) / self

    def __neg__(self) -> Tensor:
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, exponent: float) -> Tensor:
        a = self
        out = a.data**exponent

        def backward(g):
            return (g * exponent * a.data ** (exponent - 1),)

        return Tensor.from_op(out, (a,), backward, "pow")

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, self._lift(other))

    # --- reductions ----------------------------------------------------
    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        a = self

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape),)

        return Tensor.from_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward, "sum")

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[ax] for ax in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # --- elementwise ---------------------------------------------------
    def exp(self) -> Tensor:
        out = np.exp(self.data)
        return Tensor.from_op(out, (self,), lambda g: (g * out,), "exp")

    def log(self) -> Tensor:
        a = self
        return Tensor.from_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")

    def tanh(self) -> Tensor:
        out = np.tanh(self.data)
        return Tensor.from_op(out, (self,), lambda g: (g * (1.0 - out * out),), "tanh")

    def sigmoid(self) -> Tensor:
        out = expit(self.data)
        return Tensor.from_op(out, (self,), lambda g: (g * out * (1.0 - out),), "sigmoid")

    # --- shape ---------------------------------------------------------
    def reshape(self, *shape: Any) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        return Tensor.from_op(self.data.reshape(shape), (self,), lambda g: (g.reshape(src),), "reshape")

    def transpose(self, *axes: int) -> Tensor:
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return Tensor.from_op(
            self.data.transpose(axes), (self,), lambda g: (g.transpose(inverse),), "transpose"
        )

    @property
    def T(self) -> Tensor:
        return self.transpose()

    def __getitem__(self, index: Any) -> Tensor:
        if isinstance(index, Tensor):
            index = index.data.astype(np.int64)
        return Tensor.from_op(
            self.data[index], (self,), lambda g: (IndexedGrad(index, g),), "getitem"
        )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product with dA = dC·Bᵀ and dB = Aᵀ·dC."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor.from_op(a.data @ b.data, (a, b), backward, "matmul")


class Graph:
    """Topologically ordered record of the ops reachable from ``root``."""

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes = self._toposort(root)

    @staticmethod
    def _toposort(root: Tensor) -> list[Tensor]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self, grad: np.ndarray) -> None:
        grads: dict[int, np.ndarray] = {id(self.root): grad}
        owned: set[int] = set()
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                g = np.array(g, dtype=node.data.dtype)
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                self._accumulate(grads, owned, parent, pg)

    @staticmethod
    def _accumulate(grads: dict, owned: set, parent: Tensor, pg: Any) -> None:
        key = id(parent)
        if isinstance(pg, IndexedGrad):
            buf = grads.get(key)
            if buf is None or key not in owned:
                base = np.zeros(parent.shape, dtype=parent.data.dtype)
                if buf is not None:
                    base += buf
                buf = base
                grads[key] = buf
                owned.add(key)
            if pg.basic:
                buf[pg.index] += pg.value
            else:
                np.add.at(buf, pg.index, pg.value)
        elif key in grads:
            grads[key] = grads[key] + pg
            owned.add(key)
        else:
            grads[key] = pg
