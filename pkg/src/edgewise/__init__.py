"""Edge-centric graph attention with a hybrid supervised/self-supervised loss."""

from .graph import Graph, Pattern, PatternSubgraph, build_knn_graph, induce_pattern_subgraph
from .model import ModelConfig, init_params, model_forward
from .tensor import Parameters, Tape, backward
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "ModelConfig",
    "Parameters",
    "Pattern",
    "PatternSubgraph",
    "Tape",
    "TrainConfig",
    "backward",
    "build_knn_graph",
    "induce_pattern_subgraph",
    "init_params",
    "model_forward",
    "train",
]
