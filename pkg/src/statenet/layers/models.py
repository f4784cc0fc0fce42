"""Data models carried between layer kernels.

Provides the gradient carrier returned by every backward kernel and the
dropout mask used by inverted dropout.
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
import numpy.typing as npt

from ..errors import ConfigurationError, DimensionError
from ..tensor import Tensor


@dataclass(frozen=True)
class LayerGrad:
    """Gradients produced by a layer's backward kernel.

    Attributes:
        d_input: Gradient with respect to the layer input (same shape).
        d_params: Gradient per parameter, keyed ``"weight"``/``"bias"``;
            empty for parameterless layers.
    """

    d_input: Tensor
    d_params: Dict[str, Tensor] = field(default_factory=dict)

    def check_shapes(self, input_shape: Tuple[int, ...], params: Dict[str, Tensor]) -> None:
        """Raise :class:`DimensionError` if any gradient disagrees with its source."""
        if self.d_input.shape != tuple(input_shape):
            raise DimensionError(
                f"d_input shape {self.d_input.shape} != input shape {tuple(input_shape)}"
            )
        for name, grad in self.d_params.items():
            if grad.shape != params[name].shape:
                raise DimensionError(
                    f"gradient for {name} has shape {grad.shape}, parameter has {params[name].shape}"
                )


@dataclass(frozen=True)
class DropoutMask:
    """Inverted-dropout mask.

    Every mask value is exactly ``0`` or ``1 / keep_probability``. The mask
    is a pure function of ``(shape, keep_probability, seed)``.
    """

    keep_probability: float
    mask: Tensor
    seed: int

    @classmethod
    def generate(
        cls,
        shape: Tuple[int, ...],
        rate: float,
        seed: int,
        dtype: npt.DTypeLike = np.float32,
    ) -> "DropoutMask":
        """Draw a mask for dropping each unit with probability ``rate``.

        Args:
            shape: Shape of the activation being masked.
            rate: Drop probability in ``[0, 1)``.
            seed: Seed for this mask only; no RNG state is shared.
            dtype: Dtype of the mask (matches the activation).

        Raises:
            ConfigurationError: If ``rate`` is outside ``[0, 1)``.
        """
        if not 0.0 <= rate < 1.0:
            raise ConfigurationError(f"Dropout rate must be in [0, 1), got {rate}")
        keep_probability = 1.0 - rate
        scale = np.dtype(dtype).type(1.0 / keep_probability)
        if rate == 0.0:
            return cls(keep_probability, np.ones(shape, dtype=dtype), seed)
        rng = np.random.default_rng(seed)
        keep = rng.random(shape) >= rate
        mask = np.where(keep, scale, np.dtype(dtype).type(0.0)).astype(dtype, copy=False)
        return cls(keep_probability, mask, seed)
