"""Full-network forward and backward passes over an :class:`ArchitectureSpec`."""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple

import numpy as np

from ..errors import DimensionError
from ..layers import kernels
from ..layers.models import DropoutMask
from ..tensor import Tensor, reshape
from .specs import ArchitectureSpec, LayerSpec

Mode = Literal["train", "eval"]


def layer_seed(seed: int, layer_index: int) -> int:
    """Independent dropout seed for one layer of one forward pass."""
    return int(np.random.SeedSequence([seed, layer_index]).generate_state(1)[0])


@dataclass
class CacheEntry:
    layer: LayerSpec
    input: Tensor
    aux: Any = None


@dataclass
class ForwardCache:
    """Per-layer inputs and auxiliary records needed by :func:`backward`."""

    entries: List[CacheEntry] = field(default_factory=list)
    mode: Mode = "eval"

    @property
    def shapes(self) -> List[Tuple[int, ...]]:
        """Per-sample input shape of each layer, in order."""
        return [tuple(entry.input.shape[1:]) for entry in self.entries]


def forward(
    arch: ArchitectureSpec,
    params: Mapping[str, Tensor],
    batch: Tensor,
    mode: Mode = "eval",
    seed: int = 0,
    algorithm: kernels.ConvAlgorithm = "im2col",
) -> Tuple[Tensor, ForwardCache]:
    """Run ``batch`` through every layer of ``arch``.

    Args:
        arch: Architecture to evaluate.
        params: Parameter set keyed ``<layer>.weight`` / ``<layer>.bias``.
        batch: ``[N, 3, H, W]`` input matching ``arch.input_shape``.
        mode: Dropout is active only in ``train`` mode.
        seed: Seed for the dropout masks of this pass.
        algorithm: Convolution algorithm.

    Returns:
        ``(logits, cache)``.

    Raises:
        DimensionError: If the batch does not match the architecture input.
    """
    if batch.ndim != 4 or tuple(batch.shape[1:]) != tuple(arch.input_shape):
        raise DimensionError(f"Batch shape {batch.shape} does not match input {arch.input_shape}")

    cache = ForwardCache(mode=mode)
    x = batch
    for index, layer in enumerate(arch.layers):
        entry = CacheEntry(layer, x)
        if layer.kind in ("conv3", "conv1"):
            x = kernels.conv2d_forward(x, params[f"{layer.name}.weight"], params[f"{layer.name}.bias"], algorithm)
        elif layer.kind == "dense":
            x = kernels.dense_forward(x, params[f"{layer.name}.weight"], params[f"{layer.name}.bias"])
        elif layer.kind == "relu":
            x = kernels.relu(x)
        elif layer.kind == "maxpool":
            x, entry.aux = kernels.maxpool2x2(x)
        elif layer.kind == "gap":
            x = kernels.global_avg_pool(x)
        elif layer.kind == "flatten":
            x = reshape(x, (x.shape[0], int(np.prod(x.shape[1:]))))
        elif layer.kind == "dropout":
            if mode == "train" and layer.rate > 0:
                entry.aux = DropoutMask.generate(x.shape, layer.rate, layer_seed(seed, index), x.dtype)
                x = x * entry.aux.mask
        cache.entries.append(entry)
    return x, cache


def backward(
    arch: ArchitectureSpec,
    params: Mapping[str, Tensor],
    cache: ForwardCache,
    d_logits: Tensor,
    skip: Optional[frozenset] = None,
) -> Dict[str, Tensor]:
    """Reverse-mode pass returning the gradient of every parameter.

    Args:
        arch: Architecture used for the forward pass.
        params: Same parameter set as the forward pass.
        cache: Cache returned by :func:`forward`.
        d_logits: Gradient of the loss with respect to the logits.
        skip: Layer names whose parameter gradients are not needed; once no
            layer below needs a gradient the pass stops early.

    Returns:
        Gradients keyed like ``params`` (skipped layers are absent).
    """
    skip = skip or frozenset()
    needs_grad = [
        entry.layer.has_params and entry.layer.name not in skip for entry in cache.entries
    ]
    lowest = next((i for i, need in enumerate(needs_grad) if need), len(cache.entries))

    grads: Dict[str, Tensor] = {}
    g = d_logits
    for index in range(len(cache.entries) - 1, lowest - 1, -1):
        entry = cache.entries[index]
        layer, x = entry.layer, entry.input
        if layer.kind in ("conv3", "conv1"):
            result = kernels.conv2d_backward(x, params[f"{layer.name}.weight"], g)
        elif layer.kind == "dense":
            result = kernels.dense_backward(x, params[f"{layer.name}.weight"], g)
        elif layer.kind == "relu":
            result = kernels.relu_backward(x, g)
        elif layer.kind == "maxpool":
            result = kernels.maxpool2x2_backward(entry.aux, g)
        elif layer.kind == "gap":
            result = kernels.global_avg_pool_backward(x.shape, g)
        elif layer.kind == "flatten":
            result = kernels.LayerGrad(g.reshape(x.shape))
        elif layer.kind == "dropout":
            result = kernels.dropout_backward(entry.aux, g) if entry.aux is not None else kernels.LayerGrad(g)
        else:
            raise DimensionError(f"Unknown layer kind {layer.kind!r}")

        if needs_grad[index]:
            grads[f"{layer.name}.weight"] = result.d_params["weight"]
            grads[f"{layer.name}.bias"] = result.d_params["bias"]
        g = result.d_input
    return grads
