"""Ready-made gradient checks over the differentiable pieces of the pipeline."""

from __future__ import annotations

import numpy as np

from .gat import GatLayerParams, gat_forward, init_gat_params
from .tensor_core import add, grad_check, mul, sum_all


def gat_layer_gradcheck(seed: int, n_nodes: int = 4, in_dim: int = 3, out_dim: int = 4, heads: int = 2,
                        eps: float = 1e-5) -> float:
    """Max relative error of d(loss)/d(x, W, gamma) for one GAT layer.

    loss = sum(R * out) + 0.5 * sum(out * out) with a fixed random R, so the
    check sees a non-constant output gradient.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_nodes, in_dim))
    layer = init_gat_params(in_dim, out_dim, heads, rng)
    weights = rng.standard_normal((n_nodes, out_dim))

    def loss(x_, *flat):
        p = GatLayerParams(list(flat[:heads]), list(flat[heads:]))
        out = gat_forward(x_, p)
        return add(sum_all(mul(out, weights)), mul(sum_all(mul(out, out)), 0.5))

    return grad_check(loss, [x, *layer.W, *layer.gamma], eps)
