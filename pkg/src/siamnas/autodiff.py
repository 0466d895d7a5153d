"""Minimal reverse-mode autodiff over dense float64 matrices.

Everything is a 2-d numpy array. A Tape records each operation together
with its vector-Jacobian product; backward() walks the tape in reverse.
The tape is rebuilt on every forward pass (graphs change per batch), so
there is no caching layer to invalidate.

Non-finite detection happens at the boundaries (loss values, softmax
output, gradients entering Adam) rather than per elementwise op: finite
inputs cannot turn non-finite in the linear ops, and per-op isfinite
scans dominated the training profile.
"""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class TrainingError(RuntimeError):
    """Raised when a training step encounters non-finite numbers."""


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {arr.shape}")
    return arr


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise TrainingError(f"{op} produced non-finite values")
    return arr


class Node:
    """One value on the tape. ``grad`` is populated by Tape.backward."""

    __slots__ = ("value", "parents", "vjp", "grad", "requires_grad")

    def __init__(self, value, parents=(), vjp=None, requires_grad=True):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape


class Tape:
    """Dynamic tape: ops append nodes in topological order."""

    def __init__(self):
        self.nodes: list[Node] = []

    def _record(self, node: Node) -> Node:
        self.nodes.append(node)
        return node

    def var(self, value, requires_grad: bool = True) -> Node:
        arr = _as_matrix(value)
        return self._record(Node(arr, requires_grad=requires_grad))

    def const(self, value) -> Node:
        return self.var(value, requires_grad=False)

    # -- binary ops ---------------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        if a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul: {a.shape} x {b.shape}")
        out = a.value @ b.value

        def vjp(g):
            return g @ b.value.T, a.value.T @ g

        return self._record(Node(out, (a, b), vjp,
                                 a.requires_grad or b.requires_grad))

    def add(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise DimensionError(f"add: {a.shape} vs {b.shape}")
        out = a.value + b.value
        return self._record(Node(out, (a, b), lambda g: (g, g),
                                 a.requires_grad or b.requires_grad))

    def hadamard(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise DimensionError(f"hadamard: {a.shape} vs {b.shape}")
        out = a.value * b.value

        def vjp(g):
            return g * b.value, g * a.value

        return self._record(Node(out, (a, b), vjp,
                                 a.requires_grad or b.requires_grad))

    # -- unary ops ----------------------------------------------------------

    def scale(self, a: Node, s: float) -> Node:
        out = a.value * s
        return self._record(Node(out, (a,), lambda g: (g * s,), a.requires_grad))

    def relu(self, a: Node) -> Node:
        out = np.maximum(a.value, 0.0)
        # mask is built lazily so forward-only passes skip it
        return self._record(Node(out, (a,), lambda g: (g * (a.value > 0.0),),
                                 a.requires_grad))

    def transpose(self, a: Node) -> Node:
        return self._record(Node(a.value.T.copy(), (a,), lambda g: (g.T,),
                                 a.requires_grad))

    def reshape(self, a: Node, shape: tuple[int, int]) -> Node:
        if a.value.size != shape[0] * shape[1]:
            raise DimensionError(f"reshape: {a.shape} -> {shape}")
        orig = a.shape
        out = a.value.reshape(shape)
        return self._record(Node(out, (a,), lambda g: (g.reshape(orig),),
                                 a.requires_grad))

    def row_softmax(self, a: Node, mask) -> Node:
        """Softmax per row over entries where mask==1; masked entries are 0.

        A row whose mask is all zero yields an all-zero output row (the sink
        row of a DAG adjacency can be empty; that is not an error).
        """
        m = _as_matrix(mask)
        if m.shape != a.shape:
            raise DimensionError(f"row_softmax mask: {m.shape} vs {a.shape}")
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ValueError("row_softmax mask entries must be 0 or 1")
        keep = m > 0.0
        shifted = np.where(keep, a.value, -np.inf)
        row_max = np.max(shifted, axis=1, keepdims=True)
        # rows with empty mask have row_max == -inf; neutralize them
        row_max = np.where(np.isfinite(row_max), row_max, 0.0)
        exps = np.where(keep, np.exp(shifted - row_max), 0.0)
        sums = exps.sum(axis=1, keepdims=True)
        out = np.divide(exps, sums, out=np.zeros_like(exps), where=sums > 0.0)
        _check_finite(out, "row_softmax")

        def vjp(g):
            dot = np.sum(g * out, axis=1, keepdims=True)
            return (out * (g - dot),)

        return self._record(Node(out, (a,), vjp, a.requires_grad))

    def mean_pool_rows(self, a: Node) -> Node:
        n = a.shape[0]
        out = a.value.mean(axis=0, keepdims=True)
        return self._record(Node(out, (a,),
                                 lambda g: (np.repeat(g / n, n, axis=0),),
                                 a.requires_grad))

    def sum_all(self, a: Node) -> Node:
        out = np.array([[a.value.sum()]])
        shape = a.shape
        return self._record(Node(out, (a,),
                                 lambda g: (np.full(shape, g[0, 0]),),
                                 a.requires_grad))

    def mse_loss(self, a: Node, target) -> Node:
        t = _as_matrix(target)
        if t.shape != a.shape:
            raise DimensionError(f"mse_loss: {a.shape} vs {t.shape}")
        diff = a.value - t
        out = np.array([[np.mean(diff * diff)]])
        _check_finite(out, "mse_loss")
        size = t.size

        def vjp(g):
            return (2.0 * diff * (g[0, 0] / size),)

        return self._record(Node(out, (a,), vjp, a.requires_grad))

    # -- backward -----------------------------------------------------------

    def backward(self, loss: Node) -> None:
        """Reverse accumulation from a scalar loss node."""
        if loss.shape != (1, 1):
            raise ValueError(f"backward needs a 1x1 loss, got {loss.shape}")
        for node in self.nodes:
            node.grad = None
        loss.grad = np.ones((1, 1))
        for node in reversed(self.nodes):
            if node.grad is None or node.vjp is None:
                continue
            parent_grads = node.vjp(node.grad)
            for parent, pg in zip(node.parents, parent_grads):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    # vjp outputs are fresh float64 arrays (or views of the
                    # child grad, which is never mutated), so no copy needed
                    parent.grad = pg
                else:
                    parent.grad = parent.grad + pg


# -- optimizer --------------------------------------------------------------


class AdamState:
    """First/second moments plus step counter for a named parameter set."""

    def __init__(self):
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray],
              state: AdamState,
              lr: float,
              beta1: float = 0.9,
              beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    """One Adam update, in place on ``params``. Deterministic given inputs."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter '{name}'")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1 - beta2) * (g * g)
        m_hat = state.m[name] / (1 - beta1 ** t)
        v_hat = state.v[name] / (1 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state
