"""Additive angular (AAM) and additive cosine (AM) margin softmax losses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateInputError, ShapeError
from .tensor_core import (
    Matrix,
    as_matrix,
    clip,
    div,
    matmul,
    mul,
    reduce_sum,
    softmax_cross_entropy,
    sqrt,
    sub,
    where,
)

__all__ = ["MarginSoftmaxParams", "cosine_logits", "margin_softmax_loss"]


@dataclass
class MarginSoftmaxParams:
    """Class weight matrix (D x C) plus the margin settings.

    ``variant`` is ``"aam"`` (target logit ``s*cos(theta + m)``) or ``"am"``
    (target logit ``s*(cos(theta) - m)``).
    """

    class_weights: object
    margin: float = 0.3
    scale: float = 30.0
    variant: str = "aam"

    def __post_init__(self):
        self.variant = self.variant.lower()
        if self.variant not in ("aam", "am"):
            raise ConfigError(f"variant must be 'aam' or 'am', got {self.variant!r}")
        if self.scale <= 0:
            raise ConfigError("scale must be positive")
        if not 0.0 <= self.margin < 1.0:
            raise ConfigError("margin must lie in [0, 1)")
        if as_matrix(self.class_weights).cols < 2:
            raise ConfigError("need at least two classes")


def cosine_logits(emb, weights) -> Matrix:
    """Cosines between a 1 x D embedding and every unit-normalised class column."""
    emb, weights = as_matrix(emb), as_matrix(weights)
    if emb.rows != 1 or emb.cols != weights.rows:
        raise ShapeError(f"embedding {emb.shape} does not match class weights {weights.shape}")
    if not np.any(emb.value):
        raise DegenerateInputError("embedding has zero norm")
    if np.any(~weights.value.any(axis=0)):
        raise DegenerateInputError("a class weight column has zero norm")
    e = div(emb, sqrt(reduce_sum(mul(emb, emb), axis=1)))
    w = div(weights, sqrt(reduce_sum(mul(weights, weights), axis=0)))
    return matmul(e, w)


def margin_softmax_loss(emb, label: int, p: MarginSoftmaxParams) -> Matrix:
    """Cross-entropy over scaled cosines with a margin on the target class (1x1)."""
    cos = cosine_logits(emb, p.class_weights)
    n_classes = cos.cols
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")
    target = np.zeros((1, n_classes), dtype=bool)
    target[0, label] = True

    m = p.margin
    if p.variant == "am":
        shifted = sub(cos, m)
    else:
        sin = sqrt(clip(sub(1.0, mul(cos, cos)), 0.0, 1.0))
        cos_plus = sub(mul(cos, math.cos(m)), mul(sin, math.sin(m)))
        # past theta = pi - m, cos(theta + m) turns back up; continue linearly instead
        past = cos.value <= math.cos(math.pi - m)
        shifted = where(past, sub(cos, m * math.sin(m)), cos_plus)
    logits = mul(where(target, shifted, cos), p.scale)
    return softmax_cross_entropy(logits, label)
