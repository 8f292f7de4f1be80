from .functional import (
    LOSSES,
    ShapeError,
    concat,
    conv2d,
    dense,
    dropout,
    l2_penalty,
    linear,
    local2d,
    lstm,
    lstm_step,
    r2le_loss,
    rle_loss,
    mse_loss,
    take,
)
from .layers import (
    LSTM,
    Conv2D,
    Dense,
    Local2D,
    conv2d_forward,
    conv2d_param_count,
    dense_forward,
    local2d_forward,
    local2d_param_count,
    lstm_step_forward,
)
from .optim import Adam, AdamState, adam_step
from .tensor import GraphError, NonFiniteError, Tensor, backward, constant, parameter
from .tensorio import load_tensors, save_tensors

__all__ = [
    "LOSSES", "ShapeError", "concat", "conv2d", "dense", "dropout", "l2_penalty", "linear",
    "local2d", "lstm", "lstm_step", "r2le_loss", "rle_loss", "mse_loss", "take",
    "LSTM", "Conv2D", "Dense", "Local2D", "conv2d_forward", "conv2d_param_count", "dense_forward",
    "local2d_forward", "local2d_param_count", "lstm_step_forward",
    "Adam", "AdamState", "adam_step",
    "GraphError", "NonFiniteError", "Tensor", "backward", "constant", "parameter",
    "load_tensors", "save_tensors",
]
