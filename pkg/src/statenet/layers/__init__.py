"""Layer kernels, losses and gradient checking."""

from .kernels import (
    PoolRecord,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    dropout_apply,
    dropout_backward,
    global_avg_pool,
    global_avg_pool_backward,
    maxpool2x2,
    maxpool2x2_backward,
    relu,
    relu_backward,
)
from .losses import l2_penalty, softmax, softmax_cross_entropy
from .models import DropoutMask, LayerGrad

__all__ = [
    "DropoutMask",
    "LayerGrad",
    "PoolRecord",
    "conv2d_backward",
    "conv2d_forward",
    "dense_backward",
    "dense_forward",
    "dropout_apply",
    "dropout_backward",
    "global_avg_pool",
    "global_avg_pool_backward",
    "l2_penalty",
    "maxpool2x2",
    "maxpool2x2_backward",
    "relu",
    "relu_backward",
    "softmax",
    "softmax_cross_entropy",
]
