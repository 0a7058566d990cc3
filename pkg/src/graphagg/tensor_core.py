"""Dense 2-D matrices with tape-based reverse-mode differentiation.

Every value is a float64 ``numpy`` array of exactly two dimensions wrapped in
a :class:`Matrix`.  Matrices created through :meth:`GradTape.watch` are
leaves; any operation that touches a leaf appends a record to the leaf's tape,
and :meth:`GradTape.backward` walks those records in reverse, applying one
hand-written backward rule per primitive.  Operations on matrices that are not
on any tape are plain forward evaluations and record nothing.

Vectors are 1 x n (row) or n x 1 (column) matrices.  Elementwise binary
operations follow numpy broadcasting; gradients are summed back down to the
operand shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationError, ShapeError

__all__ = [
    "Matrix",
    "GradTape",
    "as_matrix",
    "matmul",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "transpose",
    "exp",
    "log",
    "sqrt",
    "clip",
    "where",
    "sigmoid",
    "leaky_relu",
    "row_softmax",
    "softmax_cross_entropy",
    "concat_rows",
    "concat_cols",
    "take_rows",
    "reduce_sum",
    "reduce_mean",
    "reduce_max",
    "reduce_min",
    "reduce_std",
    "sum_all",
    "grad_check",
]

DEFAULT_SLOPE = 0.2


def _freeze(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)  # always a private copy
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class Matrix:
    """An immutable rows x cols float64 value, optionally tracked by a tape."""

    __slots__ = ("value", "grad", "tape", "name")

    def __init__(self, value, *, tape: GradTape | None = None, name: str | None = None):
        self.value = value if _is_frozen(value) else _freeze(value)
        self.grad: np.ndarray | None = None
        self.tape = tape
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def T(self) -> Matrix:
        return transpose(self)

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() needs a 1x1 matrix, got {self.shape}")
        return float(self.value[0, 0])

    def numpy(self) -> np.ndarray:
        return self.value

    def __array__(self, dtype=None, copy=None):
        return self.value if dtype is None else self.value.astype(dtype)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        tracked = " tracked" if self.tape is not None else ""
        return f"Matrix({self.rows}x{self.cols}{tag}{tracked})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)


def _is_frozen(value) -> bool:
    return (
        isinstance(value, np.ndarray)
        and value.dtype == np.float64
        and value.ndim == 2
        and not value.flags.writeable
    )


def as_matrix(x) -> Matrix:
    """Wrap arrays, lists and scalars as untracked matrices; pass matrices through."""
    return x if isinstance(x, Matrix) else Matrix(x)


@dataclass
class _Record:
    out: Matrix
    inputs: tuple[Matrix, ...]
    forward: Callable[..., np.ndarray]
    backward: Callable[..., tuple]


class GradTape:
    """Ordered record of primitive applications for one forward pass.

    Usage::

        tape = GradTape()
        w = tape.watch(w0, "w")
        loss = sum_all(matmul(x, w))
        tape.backward(loss)
        w.grad
    """

    def __init__(self):
        self.records: list[_Record] = []
        self.leaves: list[Matrix] = []

    def watch(self, value, name: str | None = None) -> Matrix:
        leaf = Matrix(value.value if isinstance(value, Matrix) else value, tape=self, name=name)
        self.leaves.append(leaf)
        return leaf

    def _record(self, out, inputs, forward, backward) -> None:
        self.records.append(_Record(out, inputs, forward, backward))

    def backward(self, out: Matrix, seed=None) -> None:
        """Accumulate d(out)/d(leaf) into ``leaf.grad`` for every leaf on this tape.

        ``out`` must be 1x1 unless an explicit ``seed`` of its shape is given.
        """
        if out.tape is not self:
            raise ValueError("output does not depend on any matrix watched by this tape")
        if seed is None:
            if out.shape != (1, 1):
                raise ShapeError(f"backward needs a scalar output or a seed, got {out.shape}")
            seed = np.ones((1, 1))
        for m in self.leaves:
            m.grad = np.zeros_like(m.value)
        for rec in self.records:
            rec.out.grad = None
        out.grad = np.array(seed, dtype=np.float64).reshape(out.shape)

        for rec in reversed(self.records):
            g = rec.out.grad
            if g is None:
                continue
            grads = rec.backward(g, rec.out.value, *(m.value for m in rec.inputs))
            for m, gm in zip(rec.inputs, grads):
                if gm is None or m.tape is not self:
                    continue
                gm = _unbroadcast(gm, m.shape)
                m.grad = gm if m.grad is None else m.grad + gm

    def replay(self) -> list[np.ndarray]:
        """Recompute every recorded value from the leaves, in record order."""
        recomputed: dict[int, np.ndarray] = {}
        values = []
        for rec in self.records:
            args = [recomputed.get(id(m), m.value) for m in rec.inputs]
            v = rec.forward(*args)
            recomputed[id(rec.out)] = v
            values.append(v)
        return values


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == shape:
        return grad
    for axis in (0, 1):
        if shape[axis] == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _apply(forward, backward, *inputs) -> Matrix:
    mats = tuple(as_matrix(x) for x in inputs)
    tapes = {id(m.tape): m.tape for m in mats if m.tape is not None}
    if len(tapes) > 1:
        raise ValueError("operands are tracked by different tapes")
    value = _freeze(forward(*(m.value for m in mats)))
    tape = next(iter(tapes.values()), None)
    out = Matrix(value, tape=tape)
    if tape is not None:
        tape._record(out, mats, forward, backward)
    return out


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    return _apply(
        lambda x, y: x @ y,
        lambda g, out, x, y: (g @ y.T, x.T @ g),
        a,
        b,
    )


def transpose(a) -> Matrix:
    return _apply(lambda x: x.T, lambda g, out, x: (g.T,), a)


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    _broadcast_shape(a, b, "add")
    return _apply(lambda x, y: x + y, lambda g, out, x, y: (g, g), a, b)


def sub(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    _broadcast_shape(a, b, "sub")
    return _apply(lambda x, y: x - y, lambda g, out, x, y: (g, -g), a, b)


def mul(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    _broadcast_shape(a, b, "mul")
    return _apply(lambda x, y: x * y, lambda g, out, x, y: (g * y, g * x), a, b)


def div(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    _broadcast_shape(a, b, "div")
    return _apply(
        lambda x, y: x / y,
        lambda g, out, x, y: (g / y, -g * x / (y * y)),
        a,
        b,
    )


def neg(a) -> Matrix:
    return _apply(lambda x: -x, lambda g, out, x: (-g,), a)


def exp(a) -> Matrix:
    return _apply(np.exp, lambda g, out, x: (g * out,), a)


def log(a) -> Matrix:
    return _apply(np.log, lambda g, out, x: (g / x,), a)


def sqrt(a) -> Matrix:
    def backward(g, out, x):
        safe = np.where(out > 0, out, 1.0)
        # sqrt is not differentiable at 0; treat that point as a flat spot
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return _apply(np.sqrt, backward, a)


def clip(a, lo: float, hi: float) -> Matrix:
    return _apply(
        lambda x: np.clip(x, lo, hi),
        lambda g, out, x: (g * ((x >= lo) & (x <= hi)),),
        a,
    )


def where(mask, a, b) -> Matrix:
    """Select ``a`` where the constant boolean ``mask`` is true, else ``b``."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 1:
        mask = mask.reshape(1, -1)
    a, b = as_matrix(a), as_matrix(b)
    return _apply(
        lambda x, y: np.where(mask, x, y),
        lambda g, out, x, y: (np.where(mask, g, 0.0), np.where(mask, 0.0, g)),
        a,
        b,
    )


def sigmoid(a) -> Matrix:
    def forward(x):
        # split by sign so neither branch overflows
        pos = x >= 0
        z = np.exp(-np.abs(x))
        return np.where(pos, 1.0 / (1.0 + z), z / (1.0 + z))

    return _apply(forward, lambda g, out, x: (g * out * (1.0 - out),), a)


def leaky_relu(a, slope: float = DEFAULT_SLOPE) -> Matrix:
    if slope < 0:
        raise ValueError(f"leaky_relu slope must be >= 0, got {slope}")
    return _apply(
        lambda x: np.where(x >= 0, x, slope * x),
        lambda g, out, x: (np.where(x >= 0, g, slope * g),),
        a,
    )


# ---------------------------------------------------------------- row-wise maps


def row_softmax(a) -> Matrix:
    def forward(x):
        z = np.exp(x - x.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def backward(g, out, x):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _apply(forward, backward, a)


def softmax_cross_entropy(logits, label: int) -> Matrix:
    """Cross-entropy of a 1 x C logit row against class ``label`` (1x1 result).

    Evaluated as ``log1p(sum_{c != y} exp(l_c - l_y))`` when the target logit
    is the largest, which keeps tiny losses accurate.
    """
    logits = as_matrix(logits)
    if logits.rows != 1:
        raise ShapeError(f"softmax_cross_entropy expects one row, got {logits.shape}")
    if not 0 <= label < logits.cols:
        raise ValueError(f"label {label} out of range for {logits.cols} classes")

    def forward(x):
        row = x[0]
        top = row.max()
        if row[label] >= top:
            others = np.delete(row, label) - row[label]
            return np.array([[np.log1p(np.exp(others).sum())]])
        return np.array([[top + np.log(np.exp(row - top).sum()) - row[label]]])

    def backward(g, out, x):
        p = np.exp(x - x.max())
        p /= p.sum()
        p[0, label] -= 1.0
        return (g * p,)

    return _apply(forward, backward, logits)


# ---------------------------------------------------------------- structure


def concat_cols(parts: Sequence) -> Matrix:
    parts = [as_matrix(p) for p in parts]
    if not parts:
        raise ShapeError("concat_cols of nothing")
    if len({p.rows for p in parts}) != 1:
        raise ShapeError(f"concat_cols: row counts differ {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.cols for p in parts])

    def backward(g, out, *xs):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(xs)))

    return _apply(lambda *xs: np.concatenate(xs, axis=1), backward, *parts)


def concat_rows(parts: Sequence) -> Matrix:
    parts = [as_matrix(p) for p in parts]
    if not parts:
        raise ShapeError("concat_rows of nothing")
    if len({p.cols for p in parts}) != 1:
        raise ShapeError(f"concat_rows: column counts differ {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.rows for p in parts])

    def backward(g, out, *xs):
        return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(xs)))

    return _apply(lambda *xs: np.concatenate(xs, axis=0), backward, *parts)


def take_rows(a, index) -> Matrix:
    """Rows of ``a`` at the given integer positions, in the order given."""
    a = as_matrix(a)
    index = np.asarray(index, dtype=np.intp).reshape(-1)
    if index.size and (index.min() < 0 or index.max() >= a.rows):
        raise ShapeError(f"take_rows: index out of range for {a.rows} rows")

    def backward(g, out, x):
        full = np.zeros_like(x)
        np.add.at(full, index, g)
        return (full,)

    return _apply(lambda x: x[index], backward, a)


# ---------------------------------------------------------------- reductions


def _require_rows(a: Matrix, op: str) -> None:
    if a.rows == 0 or a.cols == 0:
        raise ShapeError(f"{op} of an empty {a.shape} matrix")


def reduce_sum(a, axis: int = 0) -> Matrix:
    """Sum over rows (``axis=0``, gives 1 x cols) or columns (``axis=1``)."""
    a = as_matrix(a)
    _require_rows(a, "reduce_sum")
    return _apply(
        lambda x: x.sum(axis=axis, keepdims=True),
        lambda g, out, x: (np.broadcast_to(g, x.shape),),
        a,
    )


def reduce_mean(a, axis: int = 0) -> Matrix:
    a = as_matrix(a)
    _require_rows(a, "reduce_mean")
    n = a.shape[axis]
    return _apply(
        lambda x: x.sum(axis=axis, keepdims=True) / n,
        lambda g, out, x: (np.broadcast_to(g / n, x.shape),),
        a,
    )


def _extreme(a, op: str, pick) -> Matrix:
    a = as_matrix(a)
    _require_rows(a, op)

    def backward(g, out, x):
        # gradient goes to the first row attaining the extreme in each column
        idx = pick(x, axis=0)
        full = np.zeros_like(x)
        full[idx, np.arange(x.shape[1])] = g[0]
        return (full,)

    return _apply(lambda x: x[pick(x, axis=0), np.arange(x.shape[1])][None, :], backward, a)


def reduce_max(a) -> Matrix:
    """Columnwise maximum over rows (1 x cols)."""
    return _extreme(a, "reduce_max", np.argmax)


def reduce_min(a) -> Matrix:
    """Columnwise minimum over rows (1 x cols)."""
    return _extreme(a, "reduce_min", np.argmin)


def reduce_std(a, eps: float = 0.0) -> Matrix:
    """Columnwise population standard deviation ``sqrt(var + eps)`` over rows."""
    a = as_matrix(a)
    _require_rows(a, "reduce_std")
    n = a.rows

    def forward(x):
        centred = x - x.mean(axis=0, keepdims=True)
        return np.sqrt((centred * centred).sum(axis=0, keepdims=True) / n + eps)

    def backward(g, out, x):
        centred = x - x.mean(axis=0, keepdims=True)
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g * centred / (n * safe), 0.0),)

    return _apply(forward, backward, a)


def sum_all(a) -> Matrix:
    return _apply(
        lambda x: np.array([[x.sum()]]),
        lambda g, out, x: (np.full_like(x, g[0, 0]),),
        a,
    )


# ---------------------------------------------------------------- gradient check


def grad_check(f: Callable[..., Matrix], params: Sequence, eps: float = 1e-5) -> float:
    """Largest relative disagreement between tape gradients and central differences.

    ``f`` receives one :class:`Matrix` per entry of ``params`` and must return
    a 1x1 matrix.  The error for each scalar parameter is
    ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = [np.array(as_matrix(p).value) for p in params]

    tape = GradTape()
    leaves = [tape.watch(p) for p in base]
    out = f(*leaves)
    _check_scalar(out)
    if out.tape is None:
        analytic = [np.zeros_like(p) for p in base]
    else:
        tape.backward(out)
        analytic = [leaf.grad for leaf in leaves]

    worst = 0.0
    for k, p in enumerate(base):
        for idx in np.ndindex(p.shape):
            args = [q.copy() for q in base]
            args[k][idx] = p[idx] + eps
            f_plus = _check_scalar(f(*args))
            args[k][idx] = p[idx] - eps
            f_minus = _check_scalar(f(*args))
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(analytic[k][idx] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst


def _check_scalar(out) -> float:
    out = as_matrix(out)
    if out.shape != (1, 1):
        raise ShapeError(f"grad_check needs a scalar-valued function, got {out.shape}")
    v = out.item()
    if not np.isfinite(v):
        raise EvaluationError(f"function value is not finite: {v}")
    return v
