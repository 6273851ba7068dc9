"""Minimal reverse-mode autodiff over numpy arrays.

A Tensor wraps an ndarray plus an optional backward closure recorded at
op time.  backward() walks the recorded graph in reverse topological
order and accumulates gradients into every reachable tensor that
requires them.  Only the op set needed by the gated-CNN stack exists;
everything is deterministic given the input bytes.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording (inference / detached forward passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __float__(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # Sugar used by the model/loss code; scalars only on the rhs.
    def __add__(self, other):
        from . import functional as F

        return F.add_scalar(self, other) if _is_number(other) else F.add(self, other)

    def __sub__(self, other):
        from . import functional as F

        return F.add_scalar(self, -other) if _is_number(other) else F.sub(self, other)

    def __mul__(self, other):
        from . import functional as F

        return F.mul_scalar(self, other) if _is_number(other) else F.mul(self, other)

    __rmul__ = __mul__

    def backward(self) -> None:
        """Accumulate d(self)/d(node) into .grad over the recorded graph."""
        if self.data.ndim != 0:
            raise ValueError("backward() expects a scalar loss tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                # accumulation always rebinds (never mutates in place), so
                # handing views across closures is safe
                parent.grad = g if parent.grad is None else parent.grad + g


def _is_number(x) -> bool:
    return isinstance(x, (int, float, np.integer, np.floating))


def make_op(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Wrap an op result, recording the graph only when grads are needed."""
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._parents = parents
        out._backward = backward_fn
    return out


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)
