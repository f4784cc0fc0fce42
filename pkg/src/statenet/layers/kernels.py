"""Forward and backward kernels for every layer kind of the tuned VGG-16 nets.

Convolutions are cross-correlations (no kernel flip) with stride 1; a 3x3
kernel uses zero padding 1 and a 1x1 kernel none, so both keep the spatial
extent. The reference algorithm is im2col + matmul; a direct loop over
kernel taps is available as an independent oracle.
"""

from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError, DimensionError
from ..tensor import Tensor, matmul
from .models import DropoutMask, LayerGrad

# kernel size -> zero padding
CONV_PADDING = {1: 0, 3: 1}

ConvAlgorithm = Literal["im2col", "direct"]
Mode = Literal["train", "eval"]


def _check_conv_args(x: Tensor, kernels: Tensor) -> Tuple[int, int]:
    if x.ndim != 4 or kernels.ndim != 4:
        raise DimensionError(f"conv2d expects NCHW input and OIHW kernels, got {x.shape}, {kernels.shape}")
    _, c_in, k_h, k_w = kernels.shape
    if k_h != k_w or k_h not in CONV_PADDING:
        raise ConfigurationError(f"Unsupported kernel size {k_h}x{k_w}; expected 1x1 or 3x3")
    if c_in != x.shape[1]:
        raise ConfigurationError(
            f"Channel mismatch: input has {x.shape[1]} channels, kernels expect {c_in}"
        )
    return k_h, CONV_PADDING[k_h]


def _pad(x: Tensor, pad: int) -> Tensor:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def im2col(x: Tensor, k: int, pad: int) -> Tensor:
    """Unfold ``[N, C, H, W]`` into ``[N*H*W, C*k*k]`` patch rows (stride 1)."""
    n, c, h, w = x.shape
    windows = sliding_window_view(_pad(x, pad), (k, k), axis=(2, 3))
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)


def conv2d_forward(
    x: Tensor,
    kernels: Tensor,
    bias: Tensor,
    algorithm: ConvAlgorithm = "im2col",
) -> Tensor:
    """Same-size 2D cross-correlation plus per-channel bias.

    Args:
        x: Input ``[N, C, H, W]``.
        kernels: ``[K, C, k, k]`` with ``k`` in {1, 3}.
        bias: ``[K]``.
        algorithm: ``"im2col"`` (reference) or ``"direct"``.

    Returns:
        Output ``[N, K, H, W]``.
    """
    k, pad = _check_conv_args(x, kernels)
    n_out = kernels.shape[0]
    if bias.shape != (n_out,):
        raise DimensionError(f"bias shape {bias.shape} does not match {n_out} output channels")
    n, _, h, w = x.shape

    if algorithm == "direct":
        xp = _pad(x, pad)
        out = np.zeros((n, n_out, h, w), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                out += np.einsum("nchw,kc->nkhw", xp[:, :, i : i + h, j : j + w], kernels[:, :, i, j])
        return out + bias[None, :, None, None]
    if algorithm != "im2col":
        raise ConfigurationError(f"Unknown convolution algorithm {algorithm!r}")

    cols = im2col(x, k, pad)
    out = matmul(cols, kernels.reshape(n_out, -1).T) + bias
    return np.ascontiguousarray(out.reshape(n, h, w, n_out).transpose(0, 3, 1, 2))


def conv2d_backward(x: Tensor, kernels: Tensor, upstream: Tensor) -> LayerGrad:
    """Exact gradients of :func:`conv2d_forward` for a given output cotangent."""
    k, pad = _check_conv_args(x, kernels)
    n, c, h, w = x.shape
    n_out = kernels.shape[0]
    if upstream.shape != (n, n_out, h, w):
        raise DimensionError(f"upstream shape {upstream.shape} != conv output {(n, n_out, h, w)}")

    g = upstream.transpose(0, 2, 3, 1).reshape(n * h * w, n_out)
    cols = im2col(x, k, pad)
    d_kernels = matmul(g.T, cols).reshape(kernels.shape)
    d_bias = g.sum(axis=0)

    d_cols = matmul(g, kernels.reshape(n_out, -1)).reshape(n, h, w, c, k, k)
    d_padded = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            d_padded[:, :, i : i + h, j : j + w] += d_cols[..., i, j].transpose(0, 3, 1, 2)
    d_input = d_padded[:, :, pad : pad + h, pad : pad + w]

    return LayerGrad(np.ascontiguousarray(d_input), {"weight": d_kernels, "bias": d_bias})


@dataclass(frozen=True)
class PoolRecord:
    """Which of the four window positions held each 2x2 maximum."""

    input_shape: Tuple[int, int, int, int]
    argmax: np.ndarray


def _windows(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)


def maxpool2x2(x: Tensor) -> Tuple[Tensor, PoolRecord]:
    """2x2 max pooling with stride 2.

    Ties go to the first position in row-major window order, so every
    window routes its gradient to exactly one input.

    Raises:
        DimensionError: If the input is not NCHW or H/W is odd.
    """
    if x.ndim != 4:
        raise DimensionError(f"maxpool2x2 expects NCHW input, got {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise DimensionError(f"maxpool2x2 needs even spatial extents, got {x.shape[2:]}")
    windows = _windows(x)
    argmax = windows.argmax(axis=-1).astype(np.int8)
    out = np.take_along_axis(windows, argmax[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), PoolRecord(tuple(x.shape), argmax)


def maxpool2x2_backward(record: PoolRecord, upstream: Tensor) -> LayerGrad:
    n, c, h, w = record.input_shape
    if upstream.shape != (n, c, h // 2, w // 2):
        raise DimensionError(f"upstream shape {upstream.shape} != pool output {(n, c, h // 2, w // 2)}")
    onehot = record.argmax[..., None] == np.arange(4, dtype=np.int8)
    routed = onehot * upstream[..., None]
    d_input = routed.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
    return LayerGrad(np.ascontiguousarray(d_input, dtype=upstream.dtype))


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean, ``[N, C, H, W] -> [N, C]``."""
    if x.ndim != 4:
        raise DimensionError(f"global_avg_pool expects NCHW input, got {x.shape}")
    return x.mean(axis=(2, 3), dtype=x.dtype)


def global_avg_pool_backward(input_shape: Tuple[int, ...], upstream: Tensor) -> LayerGrad:
    n, c, h, w = input_shape
    if upstream.shape != (n, c):
        raise DimensionError(f"upstream shape {upstream.shape} != GAP output {(n, c)}")
    share = upstream / upstream.dtype.type(h * w)
    return LayerGrad(np.ascontiguousarray(np.broadcast_to(share[:, :, None, None], input_shape)))


def dense_forward(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """``x @ weights + bias`` for ``x: [N, F]``, ``weights: [F, U]``, ``bias: [U]``."""
    if x.ndim != 2 or weights.ndim != 2 or bias.shape != (weights.shape[1],):
        raise DimensionError(
            f"dense shape mismatch: input {x.shape}, weights {weights.shape}, bias {bias.shape}"
        )
    return matmul(x, weights) + bias


def dense_backward(x: Tensor, weights: Tensor, upstream: Tensor) -> LayerGrad:
    if upstream.shape != (x.shape[0], weights.shape[1]):
        raise DimensionError(f"upstream shape {upstream.shape} != dense output {(x.shape[0], weights.shape[1])}")
    return LayerGrad(
        matmul(upstream, weights.T),
        {"weight": matmul(x.T, upstream), "bias": upstream.sum(axis=0)},
    )


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, x.dtype.type(0))


def relu_backward(x: Tensor, upstream: Tensor) -> LayerGrad:
    # zero gradient at x <= 0, including the kink
    return LayerGrad(upstream * (x > 0))


def dropout_apply(x: Tensor, rate: float, mode: Mode, seed: int) -> Tensor:
    """Inverted dropout: identity in eval mode, masked and rescaled in train mode."""
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"Dropout rate must be in [0, 1), got {rate}")
    if mode == "eval":
        return x.copy()
    return x * DropoutMask.generate(x.shape, rate, seed, dtype=x.dtype).mask


def dropout_backward(mask: DropoutMask, upstream: Tensor) -> LayerGrad:
    return LayerGrad(upstream * mask.mask)
