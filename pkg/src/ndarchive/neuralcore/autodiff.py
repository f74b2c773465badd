"""Reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tensor` is a node in a computation graph: it owns its values,
an accumulated gradient of identical shape, and a closure that routes
upstream gradients to its parents. Trainable parameters are leaf
tensors; ``backward()`` on a scalar loss fills every reachable leaf's
``grad`` with the exact analytic derivative.

All math is float64 and single-threaded numpy, so a fixed seed gives
bit-reproducible training.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from ndarchive.errors import NumericFailureError


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Computation-graph node holding float64 values plus their gradient."""

    __slots__ = ("values", "grad", "op", "_parents", "_backward")

    def __init__(
        self,
        values,
        op: str = "leaf",
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = np.zeros_like(self.values)
        self.op = op
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        return float(self.values)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape})"

    # -- graph construction ------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.values + other.values, "add", (self, other))

        def backward(g):
            self.grad += _unbroadcast(g, self.shape)
            other.grad += _unbroadcast(g, other.shape)

        out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = Tensor(-self.values, "neg", (self,))

        def backward(g):
            self.grad += -g

        out._backward = backward
        return out

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.values * other.values, "mul", (self, other))

        def backward(g):
            self.grad += _unbroadcast(g * other.values, self.shape)
            other.grad += _unbroadcast(g * self.values, other.shape)

        out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.values / other.values, "div", (self, other))

        def backward(g):
            self.grad += _unbroadcast(g / other.values, self.shape)
            other.grad += _unbroadcast(-g * self.values / other.values**2, other.shape)

        out._backward = backward
        return out

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        if self.values.ndim != 2 or other.values.ndim != 2:
            raise ValueError("matmul supports 2-D operands only")
        out = Tensor(self.values @ other.values, "matmul", (self, other))

        def backward(g):
            self.grad += g @ other.values.T
            other.grad += self.values.T @ g

        out._backward = backward
        return out

    def relu(self) -> "Tensor":
        out = Tensor(np.maximum(self.values, 0.0), "relu", (self,))
        mask = self.values > 0.0

        def backward(g):
            self.grad += g * mask

        out._backward = backward
        return out

    def exp(self) -> "Tensor":
        out = Tensor(np.exp(self.values), "exp", (self,))

        def backward(g):
            self.grad += g * out.values

        out._backward = backward
        return out

    def log(self) -> "Tensor":
        out = Tensor(np.log(self.values), "log", (self,))

        def backward(g):
            self.grad += g / self.values

        out._backward = backward
        return out

    def sqrt(self) -> "Tensor":
        out = Tensor(np.sqrt(self.values), "sqrt", (self,))

        def backward(g):
            self.grad += g * 0.5 / out.values

        out._backward = backward
        return out

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        out = Tensor(self.values.sum(axis=axis, keepdims=keepdims), "sum", (self,))

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self.grad += np.broadcast_to(g, self.shape)

        out._backward = backward
        return out

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        count = self.values.size if axis is None else self.values.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    @property
    def T(self) -> "Tensor":
        out = Tensor(self.values.T, "transpose", (self,))

        def backward(g):
            self.grad += g.T

        out._backward = backward
        return out

    def reshape(self, *shape: int) -> "Tensor":
        out = Tensor(self.values.reshape(*shape), "reshape", (self,))

        def backward(g):
            self.grad += g.reshape(self.shape)

        out._backward = backward
        return out

    def __getitem__(self, idx) -> "Tensor":
        out = Tensor(self.values[idx], "index", (self,))

        def backward(g):
            np.add.at(self.grad, idx, g)

        out._backward = backward
        return out

    # -- backprop ----------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        ``self`` must be scalar. A non-finite loss raises
        :class:`NumericFailureError` naming the first graph operation
        (in forward order) whose values are non-finite.
        """
        if self.values.size != 1:
            raise ValueError("backward() requires a scalar loss")
        order = _topological_order(self)
        if not np.isfinite(self.values):
            for node in order:
                if not np.all(np.isfinite(node.values)):
                    raise NumericFailureError(node.op)
            raise NumericFailureError(self.op)
        self.grad = np.ones_like(self.values)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


def _topological_order(root: Tensor) -> list[Tensor]:
    """Parents-before-children ordering, iterative to spare the stack."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, op="const")


def parameter(values) -> Tensor:
    """A trainable leaf tensor."""
    return Tensor(np.array(values, dtype=np.float64), op="param")


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = np.zeros_like(p.values)
