"""Adam, the per-epoch learning-rate decay, a toy frame trunk and the training loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .aggregator import AggregatorConfig, aggregate, embedding_dim, init_params
from .errors import ConfigError, ShapeError, TrainingError
from .gat import FrameGraph
from .losses import MarginSoftmaxParams, margin_softmax_loss
from .tensor_core import DEFAULT_SLOPE, GradTape, Matrix, add, as_matrix, leaky_relu, matmul, mul

__all__ = [
    "TrainConfig",
    "AdamState",
    "adam_step",
    "lr_at_epoch",
    "crop_or_duplicate",
    "init_trunk",
    "trunk_forward",
    "TrainResult",
    "init_model",
    "fit",
    "embed",
    "embed_all",
]

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    decay: float = 0.95
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    crop_frames: int | None = 32
    utts_per_speaker: int = 8
    trunk_hidden: int = 32
    trunk_out: int | None = None  # defaults to the aggregator's in_dim
    loss_variant: str = "am"
    margin: float = 0.3
    scale: float = 30.0

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError("decay must lie in (0, 1]")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.crop_frames is not None and self.crop_frames < 1:
            raise ConfigError("crop_frames must be positive")


def lr_at_epoch(lr: float, decay: float, epoch: int) -> float:
    return lr * decay**epoch


# ---------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update.  Returns new arrays; ``state`` is updated in place."""
    state.t += 1
    t = state.t
    out = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = p
            continue
        if np.shape(g) != np.shape(p):
            raise ShapeError(f"gradient for {name!r} has shape {np.shape(g)}, parameter {np.shape(p)}")
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = BETA1 * m + (1 - BETA1) * g
        v = BETA2 * v + (1 - BETA2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - BETA1**t)
        v_hat = v / (1 - BETA2**t)
        out[name] = p - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return out


# ---------------------------------------------------------------- cropping


def crop_or_duplicate(seq, target_len: int, rng: np.random.Generator | None = None) -> FrameGraph:
    """Fix an utterance to ``target_len`` frames.

    Longer inputs get a random contiguous window; shorter ones are tiled end
    to end and the first ``target_len`` frames kept.
    """
    if target_len < 1:
        raise ConfigError("target_len must be positive")
    x = seq.node_features if isinstance(seq, FrameGraph) else np.asarray(seq, dtype=np.float64)
    n = x.shape[0]
    if n < 1:
        raise ShapeError("cannot crop an empty sequence")
    if n >= target_len:
        start = 0 if n == target_len else int((rng or np.random.default_rng()).integers(0, n - target_len + 1))
        return FrameGraph(x[start : start + target_len])
    reps = math.ceil(target_len / n)
    return FrameGraph(np.tile(x, (reps, 1))[:target_len])


# ---------------------------------------------------------------- toy trunk


def init_trunk(in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Two per-frame affine + LeakyReLU layers."""
    l1, l2 = np.sqrt(1.0 / in_dim), np.sqrt(1.0 / hidden)
    return {
        "trunk.W1": rng.uniform(-l1, l1, size=(in_dim, hidden)),
        "trunk.b1": np.zeros((1, hidden)),
        "trunk.W2": rng.uniform(-l2, l2, size=(hidden, out_dim)),
        "trunk.b2": np.zeros((1, out_dim)),
    }


def trunk_forward(x, params: Mapping, slope: float = DEFAULT_SLOPE) -> Matrix:
    h = leaky_relu(add(matmul(x, params["trunk.W1"]), params["trunk.b1"]), slope)
    return leaky_relu(add(matmul(h, params["trunk.W2"]), params["trunk.b2"]), slope)


def embed(x, cfg: AggregatorConfig, params: Mapping) -> Matrix:
    """Trunk followed by aggregation; ``params`` holds both parameter sets."""
    return aggregate(trunk_forward(x, params), cfg, params)


# ---------------------------------------------------------------- training loop


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    loss_curve: list[float]
    lr_curve: list[float]


def _loss_params(params: Mapping, tc: TrainConfig) -> MarginSoftmaxParams:
    return MarginSoftmaxParams(params["loss.W"], tc.margin, tc.scale, tc.loss_variant)


def init_model(n_classes: int, feat_dim: int, cfg: AggregatorConfig, tc: TrainConfig) -> dict[str, np.ndarray]:
    """Trunk, aggregator and class weights; trunk and classifier draw from ``tc.seed``."""
    rng = np.random.default_rng([tc.seed, 1])
    trunk_out = tc.trunk_out or cfg.in_dim
    if trunk_out != cfg.in_dim:
        raise ConfigError(f"trunk output {trunk_out} must equal aggregator in_dim {cfg.in_dim}")
    params = init_trunk(feat_dim, tc.trunk_hidden, trunk_out, rng)
    params.update(init_params(cfg))
    params["loss.W"] = rng.standard_normal((embedding_dim(cfg), n_classes))
    return params


def fit(
    utterances: Sequence[np.ndarray],
    labels: Sequence[int],
    cfg: AggregatorConfig,
    tc: TrainConfig,
    params: dict[str, np.ndarray] | None = None,
) -> TrainResult:
    """Minibatch Adam on the margin-softmax loss.

    The learning rate for epoch ``k`` (0-based) is ``lr * decay**k``.
    """
    labels = [int(c) for c in labels]
    if len(utterances) != len(labels) or not utterances:
        raise ConfigError("need one label per utterance and at least one utterance")
    n_classes = max(labels) + 1
    feat_dim = np.asarray(utterances[0]).shape[1]
    if params is None:
        params = init_model(max(n_classes, 2), feat_dim, cfg, tc)
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    rng = np.random.default_rng([tc.seed, 2])
    state = AdamState()
    losses, lrs = [], []
    for epoch in range(tc.epochs):
        lr = lr_at_epoch(tc.lr, tc.decay, epoch)
        order = rng.permutation(len(utterances))
        total = 0.0
        for start in range(0, len(order), tc.batch_size):
            batch = order[start : start + tc.batch_size]
            tape = GradTape()
            leaves = {k: tape.watch(v, k) for k, v in params.items()}
            lp = _loss_params(leaves, tc)
            batch_loss = None
            for i in batch:
                x = utterances[i]
                if tc.crop_frames is not None:
                    x = crop_or_duplicate(x, tc.crop_frames, rng).node_features
                loss = margin_softmax_loss(embed(x, cfg, leaves), labels[i], lp)
                batch_loss = loss if batch_loss is None else add(batch_loss, loss)
            batch_loss = mul(batch_loss, 1.0 / len(batch))
            value = batch_loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value}", epoch)
            total += value * len(batch)
            tape.backward(batch_loss)
            grads = {k: leaf.grad for k, leaf in leaves.items()}
            params = adam_step(params, grads, state, lr)
        losses.append(total / len(utterances))
        lrs.append(lr)
    return TrainResult(params, losses, lrs)


def embed_all(utterances: Sequence[np.ndarray], cfg: AggregatorConfig, params: Mapping) -> np.ndarray:
    return np.vstack([embed(as_matrix(x), cfg, params).value for x in utterances])
