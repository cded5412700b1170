"""Reverse-mode autodiff tensor.

A Tensor wraps a numpy array plus an optional gradient buffer. Ops in
:mod:`stereo3d.autodiff.ops` build a DAG by recording parent tensors and a
backward closure on each result; ``backward()`` walks the DAG in reverse
topological order and accumulates gradients into ``.grad``.

Layout convention is NCHW for 2-D and NCDHW for 3-D data, row-major.
Any non-finite value produced by a forward op is a hard error.
"""

from __future__ import annotations

import contextlib

import numpy as np


class NumericError(RuntimeError):
    """Raised when a forward op produces NaN/Inf or a gradient goes non-finite."""


class ShapeError(ValueError):
    """Raised on incompatible operand shapes; message names both shapes."""


# Global switches. grad_enabled=False skips graph construction entirely
# (eval mode); check_finite guards every op output.
_state = {"grad_enabled": True, "check_finite": True}


def grad_enabled() -> bool:
    return _state["grad_enabled"]


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (forward-only)."""
    prev = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = prev


@contextlib.contextmanager
def finite_checks(enabled: bool):
    prev = _state["check_finite"]
    _state["check_finite"] = enabled
    try:
        yield
    finally:
        _state["check_finite"] = prev


class Tensor:
    """N-dimensional array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            # integers and the like land at the training precision; float
            # inputs keep whatever precision the caller chose
            arr = arr.astype(np.float32)
        if _state["check_finite"] and not np.all(np.isfinite(arr)):
            raise NumericError("non-finite values in tensor data")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}{tag})"

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, seed: np.ndarray | None = None):
        """Backpropagate from this tensor through the recorded graph.

        Visits nodes in exact reverse topological order; gradient buffers of
        all reachable tensors with ``requires_grad`` are accumulated.
        """
        if seed is None:
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(seed, dtype=self.data.dtype)
            if seed.shape != self.data.shape:
                raise ShapeError(
                    f"backward seed shape {seed.shape} != tensor shape {self.data.shape}"
                )
        order = _toposort(self)
        self.grad = seed.copy()
        for node in reversed(order):
            if node._backward is None:
                continue
            if node.grad is None:
                continue
            if _state["check_finite"] and not np.all(np.isfinite(node.grad)):
                raise NumericError(f"non-finite gradient at {node!r}")
            node._backward(node.grad)

    # Arithmetic sugar; the heavy lifting lives in ops.py to avoid an
    # import cycle (ops imports Tensor). Python scalars go through the
    # dtype-preserving scale/shift ops so f32 graphs stay f32.
    def __add__(self, other):
        from . import ops

        if isinstance(other, (int, float)):
            return ops.shift(self, float(other))
        return ops.add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        if isinstance(other, (int, float)):
            return ops.shift(self, -float(other))
        return ops.sub(self, _as_tensor(other))

    def __rsub__(self, other):
        from . import ops

        if isinstance(other, (int, float)):
            return ops.shift(ops.scale(self, -1.0), float(other))
        return ops.sub(_as_tensor(other), self)

    def __mul__(self, other):
        from . import ops

        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.scale(self, -1.0)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _toposort(root: Tensor):
    """Iterative DFS topological sort (deterministic, recursion-free)."""
    order = []
    visited = set()
    stack = [(root, False)]
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
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def make_node(data: np.ndarray, parents, backward_fn) -> Tensor:
    """Create an op result tensor, recording the graph edge.

    ``backward_fn(grad)`` must accumulate into each parent via
    ``accumulate_grad``. When grads are globally disabled or no parent
    requires them, the node is detached.
    """
    if _state["check_finite"] and not np.all(np.isfinite(data)):
        raise NumericError("forward op produced non-finite values")
    needs = _state["grad_enabled"] and any(
        p.requires_grad or p._backward is not None for p in parents
    )
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out
