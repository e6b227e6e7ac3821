"""Minimal dense-array autodiff plus the NN primitives the detector needs."""

from .core import (
    Param,
    ShapeError,
    Tensor,
    add,
    concat,
    dropout,
    exp,
    log,
    matmul,
    mul,
    pad_time,
    relu,
    repeat_time,
    reshape,
    sigmoid,
    slice_time,
    softmax,
    sub,
    tabs,
    tmean,
    transpose,
    tsum,
)
from .nn import (
    BatchNorm1d,
    Conv1d,
    ConvTranspose1d,
    LayerNorm,
    Linear,
    MultiHeadSelfAttention,
    TransformerEncoderLayer,
    UninitializedStatisticsError,
    avgpool1d,
    conv1d,
    conv1d_transpose,
    layernorm,
    linear,
    maxpool1d,
    mhsa,
    positional_encoding,
)
from .checkpoint import CheckpointError, load_into, load_records, save_params, save_records

__all__ = [
    "Param",
    "ShapeError",
    "Tensor",
    "add",
    "concat",
    "dropout",
    "exp",
    "log",
    "matmul",
    "mul",
    "pad_time",
    "relu",
    "repeat_time",
    "reshape",
    "sigmoid",
    "slice_time",
    "softmax",
    "sub",
    "tabs",
    "tmean",
    "transpose",
    "tsum",
    "BatchNorm1d",
    "Conv1d",
    "ConvTranspose1d",
    "LayerNorm",
    "Linear",
    "MultiHeadSelfAttention",
    "TransformerEncoderLayer",
    "UninitializedStatisticsError",
    "avgpool1d",
    "conv1d",
    "conv1d_transpose",
    "layernorm",
    "linear",
    "maxpool1d",
    "mhsa",
    "positional_encoding",
    "CheckpointError",
    "load_into",
    "load_records",
    "save_params",
    "save_records",
]
