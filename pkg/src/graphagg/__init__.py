"""Graph-attentive aggregation of frame-level features into utterance embeddings."""

from .aggregator import AggregatorConfig, aggregate, count_params, init_params, seresnet_shapes
from .errors import (
    ConfigError,
    DegenerateInputError,
    DegenerateParameterError,
    EvaluationError,
    FormatError,
    GraphAggError,
    ParseError,
    ShapeError,
    TrainingError,
)
from .evaluation import ScoreSet, compute_eer, cosine_score
from .gat import FrameGraph, GatLayerParams, gat_forward, gat_head_forward, gat_param_count
from .losses import MarginSoftmaxParams, margin_softmax_loss
from .pooling import GPoolParams, PooledGraph, gpool, readout
from .tensor_core import GradTape, Matrix, grad_check

__version__ = "0.1.0"
