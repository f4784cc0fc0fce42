"""Classification loss and weight regularizer."""

from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError, DataError, DimensionError
from ..tensor import Tensor


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tuple[float, Tensor]:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``.

    Args:
        logits: ``[N, classes]`` scores.
        labels: ``N`` class indices.

    Returns:
        ``(loss, d_logits)`` with ``d_logits = (softmax - onehot) / N``.

    Raises:
        DataError: If a label is outside ``[0, classes)``.
    """
    if logits.ndim != 2:
        raise DimensionError(f"logits must be [N, classes], got {logits.shape}")
    n, classes = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {labels.shape}")
    if np.any((labels < 0) | (labels >= classes)):
        bad = labels[(labels < 0) | (labels >= classes)][0]
        raise DataError(f"Label {int(bad)} outside [0, {classes})")

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(n)
    loss = float(-log_probs[rows, labels].mean(dtype=np.float64))

    d_logits = np.exp(log_probs)
    d_logits[rows, labels] -= 1
    d_logits /= logits.dtype.type(n)
    return loss, d_logits


def l2_penalty(
    params: Mapping[str, Tensor],
    lam: float,
    scope: Iterable[str],
) -> Tuple[float, Dict[str, Tensor]]:
    """``lam * sum(w**2)`` over the weight tensors of the scoped layers.

    Biases are never penalised.

    Args:
        params: Parameter set keyed ``"<layer>.weight"`` / ``"<layer>.bias"``.
        lam: Regularization strength.
        scope: Layer names whose weights are penalised.

    Returns:
        ``(penalty, gradients)`` where gradients holds ``2 * lam * w`` per scoped weight.

    Raises:
        ConfigurationError: If a scoped layer has no weight tensor.
    """
    penalty = 0.0
    grads: Dict[str, Tensor] = {}
    for layer in scope:
        key = f"{layer}.weight"
        if key not in params:
            raise ConfigurationError(f"L2 scope names unknown layer '{layer}'")
        w = params[key]
        penalty += lam * float(np.sum(np.square(w, dtype=np.float64)))
        grads[key] = w * w.dtype.type(2.0 * lam)
    return penalty, grads
