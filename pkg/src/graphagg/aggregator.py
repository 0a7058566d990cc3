"""Frame-to-utterance aggregation pipelines built from GAT, gPool and readout.

Parameters live in a flat, ordered ``dict`` of name -> 2-D array so they can
be watched on a tape, stepped by Adam and written to a checkpoint without
any extra bookkeeping.  Names::

    gat{l}.W.{h}        F_l x F'/H
    gat{l}.gamma.{h}    2F'/H x 1
    pool{l}.p           width x 1
    readout{l}.{stat}   width x width/4   (combine_concat only; stat in sum/std/min/max)
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Mapping

import numpy as np

from .errors import ConfigError, ShapeError
from .gat import FrameGraph, GatLayerParams, gat_forward, gat_param_count, init_gat_params
from .pooling import READOUTS, GPoolParams, gpool, readout
from .tensor_core import DEFAULT_SLOPE, Matrix, add, as_matrix, concat_cols

__all__ = [
    "TOPOLOGIES",
    "COMBINE_STATS",
    "AggregatorConfig",
    "init_params",
    "aggregate",
    "count_params",
    "embedding_dim",
    "ShapeSpec",
    "seresnet_shapes",
]

TOPOLOGIES = ("single_gat", "two_gat_global", "two_gat_hierarchical", "mean_pool")
COMBINE_STATS = ("sum", "std", "min", "max")


@dataclass(frozen=True)
class AggregatorConfig:
    """Wiring of one aggregation module.

    ``keep_ratio=None`` disables gPool.  ``topology="mean_pool"`` is the
    parameter-free baseline that averages frames and ignores every other field
    except ``in_dim``.
    """

    in_dim: int
    hidden_dim: int = 64
    heads: int = 1
    leaky_slope: float = DEFAULT_SLOPE
    keep_ratio: float | None = 0.8
    readout: str = "sum"
    topology: str = "single_gat"
    seed: int = 0

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}; choose from {TOPOLOGIES}")
        if self.in_dim < 1:
            raise ConfigError(f"in_dim must be positive, got {self.in_dim}")
        if self.topology == "mean_pool":
            return
        if self.hidden_dim < 1 or self.heads < 1 or self.hidden_dim % self.heads:
            raise ConfigError(
                f"hidden_dim {self.hidden_dim} is not divisible by {self.heads} heads"
            )
        if self.readout not in READOUTS:
            raise ConfigError(f"unknown readout {self.readout!r}; choose from {READOUTS}")
        if self.readout == "combine_concat" and self.hidden_dim % 4:
            raise ConfigError("combine_concat readout needs hidden_dim divisible by 4")
        if self.keep_ratio is not None and not 0.0 < self.keep_ratio <= 1.0:
            raise ConfigError(f"keep_ratio must lie in (0, 1] or be None, got {self.keep_ratio}")
        if self.leaky_slope < 0:
            raise ConfigError("leaky_slope must be >= 0")

    # ------------------------------------------------------------ key=value text

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            lines.append(f"{k}={'none' if v is None else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> AggregatorConfig:
        types = {f.name: f.type for f in fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not sep:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = _parse_field(key, val, lineno)
        values.update({k: v for k, v in overrides.items() if v is not None})
        if "in_dim" not in values:
            raise ConfigError("config is missing in_dim")
        return cls(**values)

    def with_(self, **changes) -> AggregatorConfig:
        return replace(self, **changes)


def _parse_field(key: str, val: str, lineno: int):
    try:
        if key in ("in_dim", "hidden_dim", "heads", "seed"):
            return int(val)
        if key == "leaky_slope":
            return float(val)
        if key == "keep_ratio":
            return None if val.lower() in ("none", "off", "no-pool", "") else float(val)
        return val
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {val!r} for {key}") from None


# ---------------------------------------------------------------- parameters


def _layer_dims(cfg: AggregatorConfig) -> list[tuple[int, int]]:
    if cfg.topology == "mean_pool":
        return []
    first = (cfg.in_dim, cfg.hidden_dim)
    if cfg.topology == "single_gat":
        return [first]
    return [first, (cfg.hidden_dim, cfg.hidden_dim)]


def _pool_widths(cfg: AggregatorConfig) -> list[int]:
    """Width of the node set entering each pool/readout stage."""
    if cfg.topology == "single_gat":
        return [cfg.hidden_dim]
    if cfg.topology == "two_gat_global":
        return [2 * cfg.hidden_dim]
    if cfg.topology == "two_gat_hierarchical":
        return [cfg.hidden_dim, cfg.hidden_dim]
    return []


def embedding_dim(cfg: AggregatorConfig) -> int:
    if cfg.topology == "mean_pool":
        return cfg.in_dim
    return 2 * cfg.hidden_dim if cfg.topology == "two_gat_global" else cfg.hidden_dim


def init_params(cfg: AggregatorConfig, rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
    """Fresh parameters for ``cfg``, drawn from ``cfg.seed`` unless ``rng`` is given."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    params: dict[str, np.ndarray] = {}
    for layer, (fin, fout) in enumerate(_layer_dims(cfg)):
        gp = init_gat_params(fin, fout, cfg.heads, rng)
        for h, (w, g) in enumerate(zip(gp.W, gp.gamma)):
            params[f"gat{layer}.W.{h}"] = w
            params[f"gat{layer}.gamma.{h}"] = g
    for stage, width in enumerate(_pool_widths(cfg)):
        if cfg.keep_ratio is not None:
            p = rng.standard_normal((width, 1))
            params[f"pool{stage}.p"] = p / np.linalg.norm(p)
        if cfg.readout == "combine_concat":
            lim = np.sqrt(1.0 / width)
            for stat in COMBINE_STATS:
                params[f"readout{stage}.{stat}"] = rng.uniform(-lim, lim, size=(width, width // 4))
    return params


def count_params(cfg: AggregatorConfig) -> int:
    """Closed-form number of learnable scalars in the aggregation module."""
    total = sum(gat_param_count(fin, fout, cfg.heads) for fin, fout in _layer_dims(cfg))
    for width in _pool_widths(cfg):
        if cfg.keep_ratio is not None:
            total += width
        if cfg.readout == "combine_concat":
            total += width * width
    return total


# ---------------------------------------------------------------- forward


def _gat_layer(params: Mapping, layer: int, heads: int) -> GatLayerParams:
    return GatLayerParams(
        [params[f"gat{layer}.W.{h}"] for h in range(heads)],
        [params[f"gat{layer}.gamma.{h}"] for h in range(heads)],
    )


def _pool_and_readout(nodes: Matrix, cfg: AggregatorConfig, params: Mapping, stage: int) -> Matrix:
    if cfg.keep_ratio is not None:
        nodes = gpool(nodes, GPoolParams(params[f"pool{stage}.p"], cfg.keep_ratio)).kept_nodes
    return _readout_only(nodes, cfg, params, stage)


def aggregate(seq, cfg: AggregatorConfig, params: Mapping) -> Matrix:
    """Map an N x F frame sequence to a 1 x D utterance embedding.

    single_gat            readout(gpool(gat(x)))
    two_gat_global        readout(gpool([gat1(x) | gat2(gat1(x))]))
    two_gat_hierarchical  r1 + r2, where r_l = readout(gpool_l(gat_l(.))) and
                          the second layer consumes the first pooled graph
    """
    x = as_matrix(seq.node_features if isinstance(seq, FrameGraph) else seq)
    if x.rows < 1:
        raise ShapeError("cannot aggregate an empty sequence")
    if x.cols != cfg.in_dim:
        raise ShapeError(f"frames have {x.cols} features, config expects {cfg.in_dim}")

    if cfg.topology == "mean_pool":
        return readout(x, "mean")

    slope = cfg.leaky_slope
    h1 = gat_forward(x, _gat_layer(params, 0, cfg.heads), slope)
    if cfg.topology == "single_gat":
        return _pool_and_readout(h1, cfg, params, 0)

    if cfg.topology == "two_gat_global":
        h2 = gat_forward(h1, _gat_layer(params, 1, cfg.heads), slope)
        return _pool_and_readout(concat_cols([h1, h2]), cfg, params, 0)

    # hierarchical
    if cfg.keep_ratio is not None:
        pooled1 = gpool(h1, GPoolParams(params["pool0.p"], cfg.keep_ratio)).kept_nodes
    else:
        pooled1 = h1
    r1 = _readout_only(pooled1, cfg, params, 0)
    h2 = gat_forward(pooled1, _gat_layer(params, 1, cfg.heads), slope)
    r2 = _pool_and_readout(h2, cfg, params, 1)
    return add(r1, r2)


def _readout_only(nodes: Matrix, cfg: AggregatorConfig, params: Mapping, stage: int) -> Matrix:
    proj = None
    if cfg.readout == "combine_concat":
        proj = [params[f"readout{stage}.{stat}"] for stat in COMBINE_STATS]
    return readout(nodes, cfg.readout, proj)


# ---------------------------------------------------------------- SE-ResNet shapes


@dataclass(frozen=True)
class ShapeSpec:
    """Output shape of every SE-ResNet stage for an input of ``T`` frames."""

    T: int
    stages: tuple[tuple[str, int, int, int], ...]  # (name, filters, frequency, time)
    node_count: int
    node_dim: int
    aggregation_dim: int
    embedding_dim: int

    def stage(self, name: str) -> tuple[int, int, int]:
        for n, c, f, t in self.stages:
            if n == name:
                return (c, f, t)
        raise KeyError(name)

    def rows(self) -> list[str]:
        out = [f"{n:<12}({c}, {f}, {t})" for n, c, f, t in self.stages]
        out.append(f"{'graph':<12}{self.node_count} nodes x {self.node_dim} features")
        out.append(f"{'aggregation':<12}({self.aggregation_dim})")
        out.append(f"{'fc':<12}({self.embedding_dim})")
        return out


# (name, filters, stride) of the 2-D trunk; 40 mel bins in
_SERESNET = (("conv1", 32, 1), ("conv2", 32, 1), ("conv3", 64, 2), ("conv4", 128, 2), ("conv5", 128, 2))
_MEL_BINS = 40
_FC_DIM = 256


def seresnet_shapes(T: int) -> ShapeSpec:
    if T < 1 or T % 8:
        raise ShapeError(f"T must be a positive multiple of 8, got {T}")
    freq, time = _MEL_BINS, T
    stages = []
    for name, filters, stride in _SERESNET:
        freq, time = freq // stride, time // stride
        stages.append((name, filters, freq, time))
    _, c, f, t = stages[-1]
    node_dim = c * f
    return ShapeSpec(
        T=T,
        stages=tuple(stages),
        node_count=t,
        node_dim=node_dim,
        aggregation_dim=node_dim,
        embedding_dim=_FC_DIM,
    )
