from .layers import Parameter
from .model import BLOCK_PLAN, CnnArchitecture, CnnModel, build_amr_cnn, pooled_length
from .ops import (
    batchnorm_backward,
    batchnorm_forward,
    conv1d_backward,
    conv1d_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    embed_conv_backward,
    embed_conv_forward,
    embedding_backward,
    embedding_forward,
    global_maxpool_backward,
    global_maxpool_forward,
    maxpool1d_backward,
    maxpool1d_forward,
    relu_backward,
    relu_forward,
    sigmoid,
    sigmoid_backward,
    weighted_bce,
)
from .train import Adam, TrainConfig, train

__all__ = [
    "Adam",
    "BLOCK_PLAN",
    "CnnArchitecture",
    "CnnModel",
    "Parameter",
    "TrainConfig",
    "batchnorm_backward",
    "batchnorm_forward",
    "build_amr_cnn",
    "conv1d_backward",
    "conv1d_forward",
    "dense_backward",
    "dense_forward",
    "dropout_backward",
    "dropout_forward",
    "embed_conv_backward",
    "embed_conv_forward",
    "embedding_backward",
    "embedding_forward",
    "global_maxpool_backward",
    "global_maxpool_forward",
    "maxpool1d_backward",
    "maxpool1d_forward",
    "pooled_length",
    "relu_backward",
    "relu_forward",
    "sigmoid",
    "sigmoid_backward",
    "train",
    "weighted_bce",
]
