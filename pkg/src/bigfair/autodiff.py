"""Reverse-mode automatic differentiation over float64 numpy arrays.

A Tensor wraps an ndarray plus an optional gradient. Operations executed
inside a `record()` block append nodes to a tape in construction order,
which is already a topological order, so backward() is a single reverse
scan. Outside a record() block the same operations run as plain numpy with
no graph, which is how evaluation-mode forwards avoid bookkeeping cost.

Dtype is float64 everywhere. Shapes must match exactly; the only broadcasts
are the ones each op documents (matmul with a 2-D right factor, add_bias
over the last axis, masked_fill with a broadcastable mask, scalar scaling).
Anything else raises ShapeError naming the op and the offending shapes.

softmax, log_softmax, log and exp check their inputs for NaN/Inf and fail
fast; the training loop additionally checks the loss every step, so a
divergence aborts with a step number instead of producing silent NaNs.
"""

from __future__ import annotations

import weakref
from contextlib import contextmanager
from typing import Callable, Iterator, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    def __init__(self, op: str, detail: str):
        super().__init__(f"{op}: {detail}")


class NonFiniteError(FloatingPointError):
    def __init__(self, op: str):
        super().__init__(f"{op}: input contains NaN or Inf")


class Tape:
    """Recorded computation, in construction (= topological) order."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes: list[Node] = []


_ACTIVE: Optional[Tape] = None


@contextmanager
def record() -> Iterator[Tape]:
    """Enable graph recording for the enclosed forward pass."""
    global _ACTIVE
    prev = _ACTIVE
    _ACTIVE = tape = Tape()
    try:
        yield tape
    finally:
        _ACTIVE = prev


class Node:
    """One recorded op. Holds its inputs strongly (they are needed for the
    backward pass) but its output only weakly: the output tensor already
    points at the node, and a second strong edge would make every graph a
    reference cycle that only the garbage collector could reclaim. With the
    weak edge, dropping the last user-held tensor frees the whole graph by
    refcount, which keeps long training loops at a flat memory profile."""

    __slots__ = ("out", "inputs", "grad_fn", "op", "index")

    def __init__(self, out: "Tensor", inputs: tuple, grad_fn: Callable, op: str, index: int):
        self.out = weakref.ref(out)
        self.inputs = inputs
        self.grad_fn = grad_fn
        self.op = op
        self.index = index


class Tensor:
    """float64 array with optional gradient and graph linkage."""

    __slots__ = ("data", "grad", "requires_grad", "node", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node: Optional[Node] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """Same values, cut off from the graph. Shares the buffer."""
        return Tensor(self.data)

    def backward(self) -> None:
        backward(self)

    # Operator sugar for the common cases.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(data)


def _register(op: str, out: Tensor, inputs: Sequence[Tensor], grad_fn: Callable) -> Tensor:
    """Attach `out` to the active tape if any differentiable input feeds it."""
    tape = _ACTIVE
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        node = Node(out, tuple(inputs), grad_fn, op, len(tape.nodes))
        out.node = node
        tape.nodes.append(node)
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(input) into .grad over the recorded graph.

    The loss must be a scalar produced under record(); its own gradient
    seed is exactly 1.0. Tensors used more than once accumulate the sum of
    their branch gradients, matching the chain rule.
    """
    if loss.node is None:
        raise RuntimeError(
            "backward() on a tensor with no recorded graph "
            "(constant, detached, or produced outside record())"
        )
    if loss.size != 1:
        raise ShapeError("backward", f"loss must be scalar, got shape {loss.shape}")
    tape_nodes = _nodes_for(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape_nodes):
        out = node.out()
        if out is None:
            # The output tensor was dropped without a consumer, so nothing
            # can have routed gradient into it.
            continue
        g = out.grad
        if g is None:
            continue
        grads = node.grad_fn(g)
        for inp, gi in zip(node.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            if inp.grad is None:
                inp.grad = gi
            else:
                inp.grad = inp.grad + gi


def _nodes_for(loss: Tensor) -> list[Node]:
    tape = _ACTIVE
    if tape is not None and loss.node.index < len(tape.nodes) and tape.nodes[loss.node.index] is loss.node:
        return tape.nodes[: loss.node.index + 1]
    # Backward invoked after the record() block closed: walk from the node.
    # Nodes hold indices into their original tape, which we cannot reach, so
    # collect ancestors by graph traversal and order them by index.
    seen: set[int] = set()
    ordered: list[Node] = []
    stack = [loss.node]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        ordered.append(node)
        for inp in node.inputs:
            if inp.node is not None:
                stack.append(inp.node)
    ordered.sort(key=lambda n: n.index)
    return ordered


def _check_finite(op: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(op)


# ---------------------------------------------------------------------------
# elementwise and linear ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("add", f"shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data + b.data)
    return _register("add", out, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("sub", f"shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data - b.data)
    return _register("sub", out, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("mul", f"shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data * b.data)
    return _register("mul", out, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c)
    return _register("scale", out, (a,), lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data + c)
    return _register("add_scalar", out, (a,), lambda g: (g,))


def add_bias(a: Tensor, b: Tensor) -> Tensor:
    """a + b with b a vector applied along the last axis of a."""
    if b.ndim != 1 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError("add_bias", f"cannot add bias {b.shape} to {a.shape}")
    out = Tensor(a.data + b.data)

    def grad_fn(g):
        return g, g.reshape(-1, b.shape[0]).sum(axis=0)

    return _register("add_bias", out, (a, b), grad_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product.

    Two forms are supported: equal batch dimensions on both factors, or a
    2-D right factor applied as a linear map to the last axis of `a`. No
    other broadcasting.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul", f"operands must be >=2-D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", f"inner dims differ: {a.shape} @ {b.shape}")
    linear = b.ndim == 2 and a.ndim > 2
    if not linear and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError("matmul", f"batch dims differ: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    if linear:

        def grad_fn(g):
            k = a.shape[-1]
            m = b.shape[-1]
            ga = g @ b.data.T
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, m)
            return ga, gb

    else:

        def grad_fn(g):
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
            return ga, gb

    return _register("matmul", out, (a, b), grad_fn)


# ---------------------------------------------------------------------------
# nonlinearities


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)
    out = Tensor(out_data)
    return _register("tanh", out, (a,), lambda g: (g * (1.0 - out_data * out_data),))


def exp(a: Tensor) -> Tensor:
    _check_finite("exp", a.data)
    out_data = np.exp(a.data)
    out = Tensor(out_data)
    return _register("exp", out, (a,), lambda g: (g * out_data,))


def log(a: Tensor) -> Tensor:
    _check_finite("log", a.data)
    if np.any(a.data <= 0.0):
        raise NonFiniteError("log")  # would produce -inf or NaN
    out = Tensor(np.log(a.data))
    return _register("log", out, (a,), lambda g: (g / a.data,))


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, max-shifted for stability."""
    _check_finite("softmax", a.data)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(out_data)

    def grad_fn(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        return ((g - dot) * out_data,)

    return _register("softmax", out, (a,), grad_fn)


def log_softmax(a: Tensor) -> Tensor:
    _check_finite("log_softmax", a.data)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out_data = shifted - lse
    out = Tensor(out_data)

    def grad_fn(g):
        return (g - np.exp(out_data) * g.sum(axis=-1, keepdims=True),)

    return _register("log_softmax", out, (a,), grad_fn)


# ---------------------------------------------------------------------------
# shape and indexing ops


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    return _register("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = Tensor(a.data.transpose(axes))
    return _register("transpose", out, (a,), lambda g: (g.transpose(inverse),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat", "empty input list")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _register("concat", out, tuple(tensors), grad_fn)


def reduce_sum(a: Tensor, axis: Optional[int] = None) -> Tensor:
    out = Tensor(a.data.sum(axis=axis))

    def grad_fn(g):
        if axis is None:
            return (np.full(a.shape, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _register("reduce_sum", out, (a,), grad_fn)


def reduce_mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError("reduce_mean", f"mean over empty axis of shape {a.shape}")
    out = Tensor(a.data.mean(axis=axis))
    inv = 1.0 / count

    def grad_fn(g):
        if axis is None:
            return (np.full(a.shape, float(g) * inv),)
        return (np.broadcast_to(np.expand_dims(g * inv, axis), a.shape).copy(),)

    return _register("reduce_mean", out, (a,), grad_fn)


def _scatter_add(shape: tuple, idx: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Sum rows of g into a zero array of `shape` at row indices idx.

    Equivalent to np.add.at(out, idx, g) but orders of magnitude faster for
    large index sets: sort once, segment-sum with reduceat, write each
    unique row once.
    """
    out = np.zeros(shape, dtype=np.float64)
    flat_idx = idx.reshape(-1)
    if flat_idx.size == 0:
        return out
    rows = g.reshape(flat_idx.size, -1)
    order = np.argsort(flat_idx, kind="stable")
    sorted_idx = flat_idx[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(sorted_idx)) + 1))
    sums = np.add.reduceat(rows[order], starts, axis=0)
    out.reshape(shape[0], -1)[sorted_idx[starts]] = sums
    return out


def take(a: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows a[indices] along axis 0; indices may be any int shape.

    Output shape is indices.shape + a.shape[1:]. The backward pass
    scatter-adds, so repeated indices accumulate. Serves both embedding
    lookup and assembling per-sample history/candidate blocks from a batch
    of encoded vectors.
    """
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError("take", f"indices must be integers, got dtype {idx.dtype}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise IndexError(
            f"take: index out of range [0, {a.shape[0]}) "
            f"(min {idx.min()}, max {idx.max()})"
        )
    out = Tensor(a.data[idx])
    return _register("take", out, (a,), lambda g: (_scatter_add(a.shape, idx, g),))


def embedding_lookup(table: Tensor, token_ids: np.ndarray) -> Tensor:
    """Rows of an embedding table for an integer id array."""
    return take(table, token_ids)


def masked_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where mask is True with `value`.

    The mask must be boolean and broadcastable to a's shape (it is constant,
    so the broadcast has no gradient implications).
    """
    mask = np.asarray(mask)
    if mask.dtype != np.bool_:
        raise ShapeError("masked_fill", f"mask must be boolean, got {mask.dtype}")
    try:
        np.broadcast_shapes(mask.shape, a.shape)
    except ValueError:
        raise ShapeError(
            "masked_fill", f"mask {mask.shape} not broadcastable to {a.shape}"
        ) from None
    out = Tensor(np.where(mask, float(value), a.data))
    return _register("masked_fill", out, (a,), lambda g: (np.where(mask, 0.0, g),))


def dropout(a: Tensor, rate: float, rng) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale the rest by
    1/(1-rate) so the expectation is unchanged. rate 0 is the identity and
    consumes no randomness. Call only on training forwards.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return a
    keep = 1.0 - rate
    m = rng.bernoulli_mask(a.shape, keep).astype(np.float64)
    m *= 1.0 / keep
    out = Tensor(a.data * m)
    return _register("dropout", out, (a,), lambda g: (g * m,))
