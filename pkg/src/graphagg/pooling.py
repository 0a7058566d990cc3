"""gPool node pruning and graph readout operators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateParameterError, ShapeError
from .tensor_core import (
    Matrix,
    as_matrix,
    concat_cols,
    div,
    matmul,
    mul,
    reduce_max,
    reduce_mean,
    reduce_min,
    reduce_std,
    reduce_sum,
    sigmoid,
    sqrt,
    sum_all,
    take_rows,
    transpose,
)

__all__ = [
    "READOUTS",
    "STD_EPS",
    "GPoolParams",
    "PooledGraph",
    "keep_count",
    "gpool",
    "readout",
]

READOUTS = ("sum", "mean", "max", "combine_concat")
STD_EPS = 1e-12


def keep_count(num_nodes: int, keep_ratio: float) -> int:
    """Number of nodes gPool keeps: ``max(1, ceil(ratio * N))``.

    A 1e-9 slack absorbs float error in products such as ``0.33 * 100``.
    """
    if not 0.0 < keep_ratio <= 1.0:
        raise ConfigError(f"keep_ratio must lie in (0, 1], got {keep_ratio}")
    if num_nodes < 1:
        raise ShapeError("gPool needs at least one node")
    return min(num_nodes, max(1, math.ceil(keep_ratio * num_nodes - 1e-9)))


@dataclass
class GPoolParams:
    projection: object  # length-F' vector: array or tracked Matrix, row or column
    keep_ratio: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.keep_ratio <= 1.0:
            raise ConfigError(f"keep_ratio must lie in (0, 1], got {self.keep_ratio}")


@dataclass
class PooledGraph:
    kept_nodes: Matrix
    kept_indices: np.ndarray
    gate_scores: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.kept_indices)


def _column(v) -> Matrix:
    v = as_matrix(v)
    if v.rows == 1 and v.cols != 1:
        v = transpose(v)
    if v.cols != 1:
        raise ShapeError(f"expected a vector, got shape {v.shape}")
    return v


def gpool(nodes, params: GPoolParams) -> PooledGraph:
    """Project, keep the top-K scoring nodes, and gate them by sigmoid(score).

    Ties in score go to the lower node index; kept rows come back in their
    original order.  Selection is piecewise constant, so gradients only reach
    the kept rows and their gates.
    """
    nodes = as_matrix(nodes)
    if nodes.rows < 1:
        raise ShapeError("gPool needs at least one node")
    p = _column(params.projection)
    if p.rows != nodes.cols:
        raise ShapeError(f"projection has {p.rows} entries for {nodes.cols}-wide nodes")
    if not np.any(p.value):
        raise DegenerateParameterError("gPool projection vector has zero norm")

    norm = sqrt(sum_all(mul(p, p)))
    scores = div(matmul(nodes, p), norm)

    k = keep_count(nodes.rows, params.keep_ratio)
    order = np.argsort(-scores.value[:, 0], kind="stable")
    index = np.sort(order[:k])

    gates = sigmoid(take_rows(scores, index))
    kept = mul(take_rows(nodes, index), gates)
    return PooledGraph(kept, index, gates.value[:, 0].copy())


def readout(nodes, kind: str = "sum", proj=None) -> Matrix:
    """Collapse K x F' nodes into one 1 x D row.

    ``combine_concat`` takes the columnwise sum, std, min and max, maps each
    through its own F' x F'/4 matrix from ``proj`` (in that order) and
    concatenates the four quarters, so D = F'.
    """
    nodes = as_matrix(nodes)
    if nodes.rows < 1:
        raise ShapeError("readout needs at least one node")
    if kind == "sum":
        return reduce_sum(nodes)
    if kind == "mean":
        return reduce_mean(nodes)
    if kind == "max":
        return reduce_max(nodes)
    if kind != "combine_concat":
        raise ConfigError(f"unknown readout {kind!r}; choose from {READOUTS}")

    width = nodes.cols
    if width % 4:
        raise ConfigError(f"combine_concat needs a width divisible by 4, got {width}")
    if proj is None or len(proj) != 4:
        raise ConfigError("combine_concat needs four projection matrices")
    stats = (
        reduce_sum(nodes),
        reduce_std(nodes, eps=STD_EPS),
        reduce_min(nodes),
        reduce_max(nodes),
    )
    parts = []
    for stat, w in zip(stats, proj):
        w = as_matrix(w)
        if w.shape != (width, width // 4):
            raise ShapeError(f"projection must be {width}x{width // 4}, got {w.shape}")
        parts.append(matmul(stat, w))
    return concat_cols(parts)
