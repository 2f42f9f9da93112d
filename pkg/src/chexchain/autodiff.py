"""Tape-based reverse-mode automatic differentiation.

A Graph records executed operations in order; backward() walks the record in
exact reverse, accumulating gradients into every requires_grad leaf. Ops run
eagerly on numpy buffers and only record when a Graph is active, so inference
code pays no tape overhead.
"""

import numpy as np

from .errors import ConfigurationError, UsageError


class Tensor:
    """An n-dimensional float array, optionally tracked for gradients.

    data is float64 by default; float32 is permitted as a throughput option
    but gradient checks always run in float64.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = None, dtype=np.float64):
        arr = np.asarray(data, dtype=dtype)
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError(
                f"non-finite value in tensor {name or '<unnamed>'}"
            )
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"


def param(data, name: str = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def const(data, name: str = None) -> Tensor:
    return Tensor(data, requires_grad=False, name=name)


class Node:
    """One recorded operation: inputs, output, and its backward rule."""

    __slots__ = ("op", "inputs", "output", "backward_fn", "meta")

    def __init__(self, op, inputs, output, backward_fn, meta=None):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn
        self.meta = meta or {}


_GRAPH_STACK = []


def active_graph():
    return _GRAPH_STACK[-1] if _GRAPH_STACK else None


class Graph:
    """Append-only tape of operations; context manager activates recording."""

    def __init__(self):
        self.nodes = []
        self._produced = set()
        self._used = False

    def __enter__(self):
        _GRAPH_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _GRAPH_STACK.pop()
        assert popped is self
        return False

    def record(self, node: Node) -> None:
        self.nodes.append(node)
        self._produced.add(id(node.output))

    def backward(self, loss: Tensor) -> None:
        """Populate .grad on every requires_grad leaf reachable from loss."""
        if self._used:
            raise UsageError("backward already called on this graph; build a new graph")
        if loss.data.size != 1:
            raise UsageError(f"loss must be scalar, got shape {loss.data.shape}")
        self._used = True

        grads = {id(loss): np.ones_like(loss.data)}
        tensors = {id(loss): loss}
        for node in reversed(self.nodes):
            dy = grads.pop(id(node.output), None)
            if dy is None:
                continue
            gins = node.backward_fn(dy)
            for t, g in zip(node.inputs, gins):
                if g is None or not t.requires_grad:
                    continue
                tid = id(t)
                tensors[tid] = t
                if tid in grads:
                    grads[tid] = grads[tid] + g
                else:
                    grads[tid] = g

        for tid, g in grads.items():
            t = tensors[tid]
            if not t.requires_grad or tid in self._produced:
                continue
            if t.grad is None:
                t.grad = g.copy()
            else:
                t.grad = t.grad + g


def record(op: str, inputs, output_data, backward_fn, meta=None) -> Tensor:
    """Create an op's output tensor and record it on the active graph."""
    out = Tensor.__new__(Tensor)
    out.data = output_data
    out.requires_grad = any(t.requires_grad for t in inputs)
    out.grad = None
    out.name = None
    g = active_graph()
    if g is not None:
        g.record(Node(op, tuple(inputs), out, backward_fn, meta))
    return out
