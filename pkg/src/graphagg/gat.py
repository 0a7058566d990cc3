"""Graph attention over a complete graph of frame-level features.

Each frame is a node and every ordered pair of nodes, the self pair included,
is an edge.  The adjacency is never materialised: attention is a dense
N x N row-softmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor_core import (
    DEFAULT_SLOPE,
    Matrix,
    as_matrix,
    concat_cols,
    leaky_relu,
    matmul,
    row_softmax,
    take_rows,
    transpose,
)

__all__ = [
    "FrameGraph",
    "GatLayerParams",
    "init_gat_params",
    "gat_head_forward",
    "gat_forward",
    "gat_param_count",
]


@dataclass(frozen=True)
class FrameGraph:
    """N frames of F features each, read as the nodes of a complete graph."""

    node_features: np.ndarray

    def __post_init__(self):
        x = np.array(self.node_features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ShapeError(f"node features must be a non-empty N x F matrix, got {x.shape}")
        x.setflags(write=False)
        object.__setattr__(self, "node_features", x)

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    @classmethod
    def from_feature_map(cls, fmap) -> FrameGraph:
        """Build nodes from a (filters, frequency, time) map of a 2-D trunk.

        Each time step becomes a node whose features are the filters x
        frequency slice flattened filters-major.
        """
        fmap = np.asarray(fmap, dtype=np.float64)
        if fmap.ndim != 3:
            raise ShapeError(f"expected (filters, frequency, time), got {fmap.shape}")
        c, f, t = fmap.shape
        return cls(fmap.transpose(2, 0, 1).reshape(t, c * f))


@dataclass
class GatLayerParams:
    """Per-head projections ``W[h]`` (F x F'/H) and attention columns ``gamma[h]`` (2F'/H x 1).

    Entries may be plain arrays or tracked :class:`Matrix` leaves.
    """

    W: list = field(default_factory=list)
    gamma: list = field(default_factory=list)

    def __post_init__(self):
        if not self.W or len(self.W) != len(self.gamma):
            raise ConfigError("need one W and one gamma per head")
        widths = {as_matrix(w).cols for w in self.W}
        if len(widths) != 1:
            raise ConfigError(f"heads have different widths {sorted(widths)}")

    @property
    def heads(self) -> int:
        return len(self.W)

    @property
    def in_dim(self) -> int:
        return as_matrix(self.W[0]).rows

    @property
    def out_dim(self) -> int:
        return self.heads * as_matrix(self.W[0]).cols


def _check_heads(out_dim: int, heads: int) -> int:
    if heads < 1 or out_dim < 1 or out_dim % heads:
        raise ConfigError(f"output width {out_dim} is not divisible by {heads} heads")
    return out_dim // heads


def init_gat_params(in_dim: int, out_dim: int, heads: int, rng: np.random.Generator) -> GatLayerParams:
    """Scaled-uniform initialisation, head 0 drawn first."""
    head_dim = _check_heads(out_dim, heads)
    w_lim = np.sqrt(1.0 / in_dim)
    g_lim = np.sqrt(1.0 / (2 * head_dim))
    W, gamma = [], []
    for _ in range(heads):
        W.append(rng.uniform(-w_lim, w_lim, size=(in_dim, head_dim)))
        gamma.append(rng.uniform(-g_lim, g_lim, size=(2 * head_dim, 1)))
    return GatLayerParams(W, gamma)


def _nodes(g) -> Matrix:
    if isinstance(g, FrameGraph):
        return as_matrix(g.node_features)
    x = as_matrix(g)
    if x.rows == 0 or x.cols == 0:
        raise ShapeError(f"graph needs at least one node and one feature, got {x.shape}")
    return x


def gat_head_forward(g, W, gamma, slope: float = DEFAULT_SLOPE) -> tuple[Matrix, Matrix]:
    """One attention head.  Returns ``(out, attn)`` with shapes N x F'h and N x N.

    The pair score ``gamma . concat(n_i, n_j)`` is split as
    ``gamma[:F'h] . n_i + gamma[F'h:] . n_j`` so no pair is materialised.
    """
    x = _nodes(g)
    W, gamma = as_matrix(W), as_matrix(gamma)
    if x.cols != W.rows:
        raise ShapeError(f"node width {x.cols} does not match W with {W.rows} rows")
    if gamma.shape == (1, 2 * W.cols):
        gamma = transpose(gamma)
    if gamma.shape != (2 * W.cols, 1):
        raise ShapeError(f"gamma must have {2 * W.cols} entries, got shape {gamma.shape}")

    h = W.cols
    projected = matmul(x, W)
    src = matmul(projected, take_rows(gamma, np.arange(h)))
    dst = matmul(projected, take_rows(gamma, np.arange(h, 2 * h)))
    scores = leaky_relu(src + transpose(dst), slope)
    attn = row_softmax(scores)
    return matmul(attn, projected), attn


def gat_forward(g, params: GatLayerParams, slope: float = DEFAULT_SLOPE) -> Matrix:
    """Multi-head layer; head outputs are concatenated along features (N x F')."""
    outs = [gat_head_forward(g, w, gm, slope)[0] for w, gm in zip(params.W, params.gamma)]
    return outs[0] if len(outs) == 1 else concat_cols(outs)


def gat_param_count(in_dim: int, out_dim: int, heads: int) -> int:
    head_dim = _check_heads(out_dim, heads)
    return heads * (in_dim * head_dim + 2 * head_dim)
