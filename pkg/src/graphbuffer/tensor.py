"""Dense float64 matrices with tape-based reverse-mode differentiation.

Every trainable computation in the package is expressed through this module:
matrices are 2-D float64 arrays, operations record themselves on a Tape, and
``Tape.backward`` returns gradients for the trainable leaves of the recorded
graph. Sparse adjacencies live in ``CsrMatrix`` and are never differentiated.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy import sparse as _sparse
from scipy.special import erf as _erf, expit as _expit


class DimensionError(ValueError):
    """Operand shapes do not fit the operation."""


class InvalidRateError(ValueError):
    """A probability/rate parameter is outside its valid range."""


class ContractError(RuntimeError):
    """An operation was called outside its contract (e.g. non-scalar backward root)."""


ACTIVATION_KINDS = ("relu", "sigmoid", "gelu", "tanh", "elu")

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _as_matrix_data(data) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"matrix data must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ContractError("matrix contains NaN or Inf")
    return arr


class Matrix:
    """A rows x cols float64 matrix, optionally recorded on a tape.

    Leaves are either trainable parameters (``requires_grad=True``) or
    constants (inputs, frozen weights). Interior nodes are created by the
    operation functions below; their ``requires_grad`` flag means "a gradient
    path to some trainable leaf runs through this node".
    """

    __slots__ = ("data", "requires_grad", "name", "_tape", "_inputs", "_vjp")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_matrix_data(data)
        self.requires_grad = requires_grad
        self.name = name
        self._tape = None
        self._inputs: tuple[Matrix, ...] = ()
        self._vjp: Callable | None = None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def is_leaf(self) -> bool:
        return self._vjp is None

    def detach(self) -> "Matrix":
        """A constant leaf sharing this node's data (stop-gradient)."""
        return Matrix(self.data, requires_grad=False, name=self.name)

    def __repr__(self):
        tag = self.name or ("param" if self.requires_grad else "matrix")
        return f"Matrix({tag}, {self.rows}x{self.cols})"


def parameter(data, name: str | None = None) -> Matrix:
    return Matrix(data, requires_grad=True, name=name)


def constant(data, name: str | None = None) -> Matrix:
    return Matrix(data, requires_grad=False, name=name)


class Tape:
    """Ordered record of operations; node order is topological by construction."""

    __slots__ = ("_nodes",)

    def __init__(self):
        self._nodes: list[Matrix] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, out: Matrix, inputs: tuple[Matrix, ...], vjp: Callable) -> Matrix:
        out._tape = self
        out._inputs = inputs
        out._vjp = vjp
        out.requires_grad = any(i.requires_grad for i in inputs)
        self._nodes.append(out)
        return out

    def backward(self, root: Matrix, release: bool = False) -> dict[Matrix, np.ndarray]:
        """Reverse sweep from a 1x1 root; returns grads keyed by trainable leaf.

        Frozen leaves (``requires_grad=False``) accumulate nothing and are
        absent from the result. With ``release=True`` every interior node's
        value and closure are dropped as soon as the sweep passes it, which
        caps peak memory on large graphs but leaves the tape unusable
        afterwards (consumers always run before their inputs in reverse
        order, so nothing freed is ever needed again).
        """
        if root.shape != (1, 1):
            raise ContractError(f"backward root must be 1x1 scalar, got {root.shape}")
        if root._tape is not self:
            raise ContractError("backward root was not recorded on this tape")
        pending: dict[int, np.ndarray] = {id(root): np.ones((1, 1))}
        leaf_grads: dict[Matrix, np.ndarray] = {}
        for node in reversed(self._nodes):
            g = pending.pop(id(node), None)
            if g is not None:
                for inp, pg in zip(node._inputs, node._vjp(g)):
                    if pg is None or not inp.requires_grad:
                        continue
                    if inp._vjp is None:
                        prev = leaf_grads.get(inp)
                        leaf_grads[inp] = pg if prev is None else prev + pg
                    else:
                        prev = pending.get(id(inp))
                        pending[id(inp)] = pg if prev is None else prev + pg
            if release:
                node._vjp = None
                node._inputs = ()
                if node is not root:
                    node.data = None  # type: ignore[assignment]
        if release:
            self._nodes.clear()
        return leaf_grads


def backward(tape: Tape, root: Matrix) -> dict[Matrix, np.ndarray]:
    return tape.backward(root)


def record_op(tape: Tape | None, data, inputs: Sequence[Matrix], vjp: Callable) -> Matrix:
    """Create an operation node.

    ``vjp(g)`` must return one cotangent per input (``None`` where the input
    needs no gradient). With ``tape=None`` the op is a pure computation.
    """
    out = Matrix(data)
    if tape is not None:
        tape._record(out, tuple(inputs), vjp)
    return out


# ---------------------------------------------------------------------------
# core operations


def matmul(a: Matrix, b: Matrix, tape: Tape | None = None) -> Matrix:
    if a.cols != b.rows:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")

    def vjp(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return record_op(tape, a.data @ b.data, (a, b), vjp)


def add(a: Matrix, b: Matrix, tape: Tape | None = None) -> Matrix:
    if a.shape != b.shape:
        raise DimensionError(f"add: {a.shape} + {b.shape}")
    return record_op(tape, a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Matrix, b: Matrix, tape: Tape | None = None) -> Matrix:
    if a.shape != b.shape:
        raise DimensionError(f"sub: {a.shape} - {b.shape}")
    return record_op(tape, a.data - b.data, (a, b), lambda g: (g, -g))


def add_row_bias(a: Matrix, bias: Matrix, tape: Tape | None = None) -> Matrix:
    """Broadcast a 1 x cols bias over every row (the only broadcast supported)."""
    if bias.shape != (1, a.cols):
        raise DimensionError(f"bias shape {bias.shape} does not fit {a.shape}")
    return record_op(
        tape, a.data + bias.data, (a, bias), lambda g: (g, g.sum(axis=0, keepdims=True))
    )


def scale(a: Matrix, factor: float, tape: Tape | None = None) -> Matrix:
    factor = float(factor)
    return record_op(tape, a.data * factor, (a,), lambda g: (g * factor,))


def scale_rows(a: Matrix, weights: np.ndarray, tape: Tape | None = None) -> Matrix:
    """Multiply row i by constant weights[i] (degree normalization)."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
    if w.shape[0] != a.rows:
        raise DimensionError(f"row weights length {w.shape[0]} != rows {a.rows}")
    return record_op(tape, a.data * w, (a,), lambda g: (g * w,))


def mul_by_scalar_param(a: Matrix, s: Matrix, tape: Tape | None = None) -> Matrix:
    """a scaled by a trainable 1x1 node (GIN's 1+eps factor)."""
    if s.shape != (1, 1):
        raise DimensionError("scalar parameter must be 1x1")

    def vjp(g):
        ga = g * s.data[0, 0] if a.requires_grad else None
        gs = np.array([[float(np.sum(g * a.data))]]) if s.requires_grad else None
        return ga, gs

    return record_op(tape, a.data * s.data[0, 0], (a, s), vjp)


def add_scalar_param(s: Matrix, offset: float, tape: Tape | None = None) -> Matrix:
    if s.shape != (1, 1):
        raise DimensionError("scalar parameter must be 1x1")
    return record_op(tape, s.data + float(offset), (s,), lambda g: (g,))


def concat_cols(parts: Sequence[Matrix], tape: Tape | None = None) -> Matrix:
    parts = list(parts)
    if not parts:
        raise DimensionError("concat_cols needs at least one operand")
    rows = parts[0].rows
    if any(p.rows != rows for p in parts):
        raise DimensionError("concat_cols operands must share row count")
    widths = [p.cols for p in parts]
    offsets = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(
            g[:, offsets[i]:offsets[i + 1]] if p.requires_grad else None
            for i, p in enumerate(parts)
        )

    return record_op(tape, np.concatenate([p.data for p in parts], axis=1), parts, vjp)


def sum_all(a: Matrix, tape: Tape | None = None) -> Matrix:
    def vjp(g):
        return (np.full(a.shape, g[0, 0]),)

    return record_op(tape, np.array([[a.data.sum()]]), (a,), vjp)


# ---------------------------------------------------------------------------
# nonlinearities


def _gelu(x):
    return 0.5 * x * (1.0 + _erf(x * _INV_SQRT2))


def _gelu_deriv(x):
    phi = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    cdf = 0.5 * (1.0 + _erf(x * _INV_SQRT2))
    return cdf + x * phi


def _elu(x):
    neg = np.minimum(x, 0.0)
    return np.where(x > 0.0, x, np.expm1(neg))


def _elu_deriv(x):
    neg = np.minimum(x, 0.0)
    return np.where(x > 0.0, 1.0, np.exp(neg))


_ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "relu": (lambda x: np.maximum(x, 0.0), lambda x: (x > 0.0).astype(np.float64)),
    "sigmoid": (_expit, lambda x: _expit(x) * (1.0 - _expit(x))),
    "gelu": (_gelu, _gelu_deriv),
    "tanh": (np.tanh, lambda x: 1.0 - np.tanh(x) ** 2),
    "elu": (_elu, _elu_deriv),
}


def activation(x: Matrix, kind: str, tape: Tape | None = None) -> Matrix:
    try:
        fn, deriv = _ACTIVATIONS[kind]
    except KeyError:
        raise InvalidRateError(f"unsupported activation kind: {kind!r}") from None
    xd = x.data
    return record_op(tape, fn(xd), (x,), lambda g: (g * deriv(xd),))


def log_softmax_rows(x: Matrix, tape: Tape | None = None) -> Matrix:
    if x.cols < 1:
        raise DimensionError("log_softmax needs at least one column")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=1, keepdims=True),)

    return record_op(tape, out, (x,), vjp)


def dropout(x: Matrix, p: float, rng: np.random.Generator, tape: Tape | None = None) -> Matrix:
    """Inverted dropout: kept entries scaled by 1/(1-p); identity at p=0."""
    if not 0.0 <= p < 1.0:
        raise InvalidRateError(f"dropout rate must be in [0, 1), got {p}")
    if p == 0.0:
        return x
    # the mask is held as booleans; the float view would be 8x the memory
    keep = rng.random(x.shape) >= p
    scale = 1.0 / (1.0 - p)
    out = np.where(keep, x.data * scale, 0.0)
    return record_op(tape, out, (x,), lambda g: (np.where(keep, g * scale, 0.0),))


# ---------------------------------------------------------------------------
# sparse adjacency


class CsrMatrix:
    """Compressed sparse rows matrix; adjacency-style constant, never trained."""

    __slots__ = ("rows", "cols", "indptr", "indices", "values", "_cached")

    def __init__(self, rows: int, cols: int, indptr, indices, values):
        self.rows = int(rows)
        self.cols = int(cols)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self._cached = None
        self._validate()

    def _validate(self):
        if self.indptr.shape != (self.rows + 1,):
            raise DimensionError("indptr length must be rows + 1")
        if self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise DimensionError("indptr must start at 0 and end at nnz")
        if np.any(np.diff(self.indptr) < 0):
            raise DimensionError("indptr must be monotone non-decreasing")
        if len(self.indices) != len(self.values):
            raise DimensionError("indices and values length mismatch")
        if len(self.indices):
            if self.indices.min() < 0 or self.indices.max() >= self.cols:
                raise DimensionError("column index out of bounds")
            # strictly increasing inside each row: the only allowed non-increases
            # in the flat index stream are at row starts
            starts = self.indptr[1:-1]
            starts = starts[starts < len(self.indices)]
            row_start = np.zeros(len(self.indices), dtype=bool)
            row_start[starts] = True
            steps = np.diff(self.indices)
            if np.any((steps <= 0) & ~row_start[1:]):
                raise DimensionError("column indices must strictly increase within a row")
        if not np.isfinite(self.values).all():
            raise ContractError("CSR values contain NaN or Inf")

    @property
    def nnz(self) -> int:
        return len(self.indices)

    @classmethod
    def from_dense(cls, dense) -> "CsrMatrix":
        sp = _sparse.csr_matrix(np.asarray(dense, dtype=np.float64))
        sp.sort_indices()
        return cls(sp.shape[0], sp.shape[1], sp.indptr, sp.indices, sp.data)

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n))

    def to_scipy(self) -> _sparse.csr_matrix:
        if self._cached is None:
            self._cached = _sparse.csr_matrix(
                (self.values, self.indices, self.indptr), shape=(self.rows, self.cols)
            )
        return self._cached

    def densify(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.to_scipy().sum(axis=1)).ravel()

    def __repr__(self):
        return f"CsrMatrix({self.rows}x{self.cols}, nnz={self.nnz})"


def spmm(s: CsrMatrix, d: Matrix, tape: Tape | None = None) -> Matrix:
    """Sparse @ dense; the sparse operand is constant (adjacencies are not trained)."""
    if s.cols != d.rows:
        raise DimensionError(f"spmm: {s.rows}x{s.cols} @ {d.shape}")
    sp = s.to_scipy()

    def vjp(g):
        return ((sp.T @ g) if d.requires_grad else None,)

    out = np.asarray(sp @ d.data)
    return record_op(tape, out, (d,), vjp)
