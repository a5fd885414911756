"""Trainable-network substrate: operation catalog, assembly, training."""

from .layers import (
    CELL_SAFE_OPS,
    OPERATION_KINDS,
    PARAMETER_FREE_OPS,
    cell,
    conv,
    conv5x5,
    dense,
    dil_conv3x3,
    flatten,
    global_avg_pool,
    identity_op,
    maxpool2x2,
    sep_conv3x3,
    zero_op,
)
from .network import (
    Metrics,
    NetworkGraph,
    TrainConfig,
    build_network,
    default_feature_cut,
    evaluate,
    mean_squared_error,
    penultimate_features,
    softmax_cross_entropy,
    train,
)
from .gradcheck import GradCheckResult, gradient_check
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "CELL_SAFE_OPS",
    "OPERATION_KINDS",
    "PARAMETER_FREE_OPS",
    "GradCheckResult",
    "Metrics",
    "NetworkGraph",
    "TrainConfig",
    "build_network",
    "cell",
    "conv",
    "conv5x5",
    "default_feature_cut",
    "dense",
    "dil_conv3x3",
    "evaluate",
    "flatten",
    "global_avg_pool",
    "gradient_check",
    "identity_op",
    "load_checkpoint",
    "maxpool2x2",
    "mean_squared_error",
    "penultimate_features",
    "save_checkpoint",
    "sep_conv3x3",
    "softmax_cross_entropy",
    "train",
    "zero_op",
]
