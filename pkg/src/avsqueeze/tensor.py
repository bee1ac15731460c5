"""Dense float64 tensors and a reverse-mode autodiff tape.

Everything numeric in the package flows through `Value`s recorded on a `Tape`.
A Tape is single-owner and single-threaded; Tensors are immutable after
construction and safe to share. Backward is one reverse sweep over the node
list (creation order is already topological), visiting each node exactly once.

Only two broadcast forms are supported by the pointwise ops: equal shapes, and
scalar-against-tensor (a size-1 operand). Anything else raises DimensionError.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

Array = np.ndarray


def _as_f64(data) -> Array:
    return np.ascontiguousarray(np.asarray(data, dtype=np.float64))


class Tensor:
    """Immutable dense float64 array, row-major."""

    __slots__ = ("_data",)

    def __init__(self, data, *, check_finite: bool = True):
        arr = _as_f64(data)
        if check_finite and not np.all(np.isfinite(arr)):
            raise ContractError("tensor contains non-finite values")
        arr.setflags(write=False)
        self._data = arr

    @property
    def data(self) -> Array:
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def size(self) -> int:
        return self._data.size

    def numpy(self) -> Array:
        """Writable copy of the contents."""
        return self._data.copy()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def _unwrap(x) -> Array:
    if isinstance(x, Tensor):
        return x.data
    return _as_f64(x)


class Value:
    """Handle to one node on a Tape; `data` is the forward result."""

    __slots__ = ("tape", "index", "data")

    def __init__(self, tape: "Tape", index: int, data: Array):
        self.tape = tape
        self.index = index
        self.data = data

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def tensor(self) -> Tensor:
        return Tensor(self.data, check_finite=False)

    # operator sugar; scalars are captured in the node, not lifted to leaves
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Value) else -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Value(index={self.index}, shape={self.data.shape})"


class _Node:
    __slots__ = ("parents", "backward_fn")

    def __init__(self, parents: tuple[int, ...], backward_fn):
        self.parents = parents
        self.backward_fn = backward_fn


class Tape:
    """Recorded primitive operations; creation order is topological order."""

    def __init__(self):
        self._nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def leaf(self, data) -> Value:
        """Register an input (parameter or constant) on the tape."""
        return self._record(_unwrap(data), (), None)

    def _record(self, data: Array, parents: tuple[Value, ...], backward_fn) -> Value:
        for p in parents:
            if p.tape is not self:
                raise ContractError("operands belong to different tapes")
        node = _Node(tuple(p.index for p in parents), backward_fn)
        self._nodes.append(node)
        return Value(self, len(self._nodes) - 1, data)


class Gradients:
    """Read-only map from tape nodes to d(loss)/d(node)."""

    def __init__(self, tape: Tape, table: dict[int, Array]):
        self._tape = tape
        self._table = table

    def wrt(self, value: Value) -> Array:
        if value.tape is not self._tape:
            raise ContractError("value belongs to a different tape")
        g = self._table.get(value.index)
        if g is None:
            return np.zeros_like(value.data)
        return g


def backward(tape: Tape, loss: Value) -> Gradients:
    """Reverse sweep from `loss`; returns gradients for every reachable node."""
    if loss.tape is not tape:
        raise ContractError("loss does not live on this tape")
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
    table: dict[int, Array] = {loss.index: np.ones_like(loss.data)}
    nodes = tape._nodes
    for idx in range(loss.index, -1, -1):
        grad = table.get(idx)
        if grad is None:
            continue
        node = nodes[idx]
        if node.backward_fn is None:
            continue
        for parent_idx, contrib in zip(node.parents, node.backward_fn(grad)):
            prev = table.get(parent_idx)
            table[parent_idx] = contrib if prev is None else prev + contrib
    return Gradients(tape, table)


# ---------------------------------------------------------------------------
# pointwise primitives


def _reduce_to(grad: Array, shape: tuple[int, ...]) -> Array:
    """Collapse a broadcasted gradient back to the operand's shape."""
    if grad.shape == shape:
        return grad
    return np.sum(grad).reshape(shape)


def _binary_shapes(a: Array, b: Array) -> tuple[int, ...]:
    if a.shape == b.shape:
        return a.shape
    if a.size == 1:
        return b.shape
    if b.size == 1:
        return a.shape
    raise DimensionError(
        f"shapes {a.shape} and {b.shape} are neither equal nor scalar-vs-tensor"
    )


def _coerce_pair(a, b) -> tuple[Value, Array | None, float | None]:
    """Order (value, other_value_data_or_None, scalar_or_None) for a op b."""
    if isinstance(a, Value) and isinstance(b, Value):
        return a, b, None
    if isinstance(a, Value):
        return a, None, float(b) if np.isscalar(b) or np.asarray(b).size == 1 else None
    raise TypeError("left operand must be a Value")


def add(a: Value, b) -> Value:
    if isinstance(b, Value):
        _binary_shapes(a.data, b.data)
        out = a.data + b.data

        def bwd(g):
            return _reduce_to(g, a.data.shape), _reduce_to(g, b.data.shape)

        return a.tape._record(out, (a, b), bwd)
    scalar = float(np.asarray(b).reshape(()))
    out = a.data + scalar
    return a.tape._record(out, (a,), lambda g: (g,))


def mul(a: Value, b) -> Value:
    if isinstance(b, Value):
        _binary_shapes(a.data, b.data)
        out = a.data * b.data
        a_data, b_data = a.data, b.data

        def bwd(g):
            return (
                _reduce_to(g * b_data, a_data.shape),
                _reduce_to(g * a_data, b_data.shape),
            )

        return a.tape._record(out, (a, b), bwd)
    scalar = float(np.asarray(b).reshape(()))
    out = a.data * scalar
    return a.tape._record(out, (a,), lambda g: (g * scalar,))


def exp(a: Value) -> Value:
    out = np.exp(a.data)
    return a.tape._record(out, (a,), lambda g: (g * out,))


def log(a: Value) -> Value:
    a_data = a.data
    out = np.log(a_data)
    return a.tape._record(out, (a,), lambda g: (g / a_data,))


def sigmoid(a: Value) -> Value:
    out = _sigmoid_raw(a.data)
    return a.tape._record(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a: Value) -> Value:
    a_data = a.data
    out = _softplus_raw(a_data)
    return a.tape._record(out, (a,), lambda g: (g * _sigmoid_raw(a_data),))


def silu(a: Value) -> Value:
    a_data = a.data
    s = _sigmoid_raw(a_data)
    out = a_data * s

    def bwd(g):
        return (g * s * (1.0 + a_data * (1.0 - s)),)

    return a.tape._record(out, (a,), bwd)


def _sigmoid_raw(x: Array) -> Array:
    # stable in both tails
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softplus_raw(x: Array) -> Array:
    return np.logaddexp(0.0, x)


_ELEMENTWISE = {
    "add": add,
    "mul": mul,
    "exp": exp,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "silu": silu,
}


def elementwise(op: str, *args) -> Value:
    """Dispatch a named pointwise op: add, mul, softplus, silu, exp, sigmoid."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# ---------------------------------------------------------------------------
# linear algebra and structure primitives


def matmul(a: Value, b: Value) -> Value:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul needs 2-D operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.data.shape} vs {b.data.shape}"
        )
    out = a.data @ b.data
    a_data, b_data = a.data, b.data

    def bwd(g):
        return g @ b_data.T, a_data.T @ g

    return a.tape._record(out, (a, b), bwd)


def transpose(a: Value) -> Value:
    out = np.ascontiguousarray(a.data.T)
    return a.tape._record(out, (a,), lambda g: (np.ascontiguousarray(g.T),))


def sum_all(a: Value) -> Value:
    shape = a.data.shape
    out = np.asarray(np.sum(a.data))
    return a.tape._record(out, (a,), lambda g: (np.full(shape, float(g)),))


def mean_all(a: Value) -> Value:
    shape = a.data.shape
    n = a.data.size
    out = np.asarray(np.mean(a.data))
    return a.tape._record(out, (a,), lambda g: (np.full(shape, float(g) / n),))


def softmax_rows(x: Value) -> Value:
    """Row softmax with max subtraction; each row sums to 1 within 1e-12."""
    out = _softmax_rows_raw(x.data)

    def bwd(g):
        inner = np.sum(g * out, axis=-1, keepdims=True)
        return (out * (g - inner),)

    return x.tape._record(out, (x,), bwd)


def _softmax_rows_raw(x: Array) -> Array:
    if x.ndim != 2:
        raise DimensionError(f"softmax_rows needs a 2-D input, got {x.shape}")
    shifted = x - np.max(x, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def logsumexp_rows(x: Value) -> Value:
    """Per-row log-sum-exp, shape [M, 1]; gradient is the row softmax."""
    x_data = x.data
    m = np.max(x_data, axis=1, keepdims=True)
    out = m + np.log(np.sum(np.exp(x_data - m), axis=1, keepdims=True))

    def bwd(g):
        return (g * _softmax_rows_raw(x_data),)

    return x.tape._record(out, (x,), bwd)


def gather_rows(x: Value, cols: Sequence[int]) -> Value:
    """Pick one column per row, shape [M, 1]."""
    idx = np.asarray(cols, dtype=np.intp)
    m, n = x.data.shape
    if idx.shape != (m,):
        raise DimensionError(f"need {m} column indices, got shape {idx.shape}")
    if np.any(idx < 0) or np.any(idx >= n):
        raise DimensionError("gather_rows column index out of range")
    out = x.data[np.arange(m), idx][:, None].copy()

    def bwd(g):
        dx = np.zeros((m, n))
        dx[np.arange(m), idx] = g[:, 0]
        return (dx,)

    return x.tape._record(out, (x,), bwd)


def rms_normalize(x: Value, gain: Value, eps: float = 1e-6) -> Value:
    """Row RMS normalization with a learned per-column gain."""
    x_data, g_data = x.data, gain.data
    m, n = x_data.shape
    if g_data.shape != (n,):
        raise DimensionError(f"gain shape {g_data.shape} does not match width {n}")
    r = np.sqrt(np.mean(x_data * x_data, axis=1, keepdims=True) + eps)
    normed = x_data / r
    out = normed * g_data

    def bwd(g):
        gg = g * g_data
        inner = np.sum(gg * x_data, axis=1, keepdims=True)
        dx = gg / r - x_data * inner / (n * r**3)
        dgain = np.sum(g * normed, axis=0)
        return dx, dgain

    return x.tape._record(out, (x, gain), bwd)


def add_rowvec(x: Value, b: Value) -> Value:
    """Add a length-N vector to every row of an [M, N] tensor."""
    if x.data.ndim != 2 or b.data.shape != (x.data.shape[1],):
        raise DimensionError(
            f"add_rowvec shapes incompatible: {x.data.shape} and {b.data.shape}"
        )
    out = x.data + b.data

    def bwd(g):
        return g, np.sum(g, axis=0)

    return x.tape._record(out, (x, b), bwd)


def insert_rows(
    x: Value, q: Value, input_positions: Array, query_positions: Array
) -> Value:
    """Build an [N+Q, d] tensor with x rows at input_positions and the shared
    row q at every query position. Gradient w.r.t. q accumulates across copies.
    """
    in_pos = np.asarray(input_positions, dtype=np.intp)
    q_pos = np.asarray(query_positions, dtype=np.intp)
    n, d = x.data.shape
    if q.data.shape != (d,):
        raise DimensionError(f"query shape {q.data.shape} does not match width {d}")
    total = n + q_pos.size
    out = np.empty((total, d))
    out[in_pos] = x.data
    out[q_pos] = q.data

    def bwd(g):
        return g[in_pos], np.sum(g[q_pos], axis=0)

    return x.tape._record(out, (x, q), bwd)


def take_rows(x: Value, rows: Array) -> Value:
    idx = np.asarray(rows, dtype=np.intp)
    out = x.data[idx].copy()
    shape = x.data.shape

    def bwd(g):
        dx = np.zeros(shape)
        np.add.at(dx, idx, g)
        return (dx,)

    return x.tape._record(out, (x,), bwd)


def take_cols(x: Value, start: int, stop: int) -> Value:
    out = x.data[:, start:stop].copy()
    shape = x.data.shape

    def bwd(g):
        dx = np.zeros(shape)
        dx[:, start:stop] = g
        return (dx,)

    return x.tape._record(out, (x,), bwd)


def concat_cols(*parts: Value) -> Value:
    if not parts:
        raise ContractError("concat_cols needs at least one part")
    widths = [p.data.shape[1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=1)
    bounds = np.cumsum([0] + widths)

    def bwd(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return parts[0].tape._record(out, tuple(parts), bwd)


def reverse_rows(x: Value) -> Value:
    out = x.data[::-1].copy()
    return x.tape._record(out, (x,), lambda g: (g[::-1].copy(),))
