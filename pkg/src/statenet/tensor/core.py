"""Basic tensor algebra every layer kernel is built on.

All functions are pure: inputs are never written to and a fresh array is
returned. Only same-shape and scalar operands are supported; there is no
implicit broadcasting.
"""

from typing import Any, Literal, Sequence, Union

import numpy as np
import numpy.typing as npt

from ..errors import DimensionError, NumericError

Tensor = npt.NDArray[np.floating]

ElementwiseOp = Literal["add", "sub", "mul", "scale"]

STORAGE_DTYPE = np.float32
COMPUTE_DTYPES = (np.float32, np.float64)
MAX_RANK = 4


def as_tensor(data: Any, dtype: npt.DTypeLike = STORAGE_DTYPE) -> Tensor:
    """Convert array-like data into a validated tensor.

    Args:
        data: Nested sequences or an array.
        dtype: ``float32`` for storage, ``float64`` for gradient checks.

    Returns:
        A C-contiguous array of the requested dtype.

    Raises:
        DimensionError: If the rank is outside 1..4 or an extent is zero.
        NumericError: If any element is NaN or infinite.
    """
    if np.dtype(dtype).type not in COMPUTE_DTYPES:
        raise DimensionError(f"Unsupported tensor dtype {np.dtype(dtype)}")
    array = np.array(data, dtype=dtype)
    # ascontiguousarray promotes 0-d input to 1-d, so the rank is checked first
    if not 1 <= array.ndim <= MAX_RANK:
        raise DimensionError(f"Tensor rank must be 1..{MAX_RANK}, got shape {array.shape}")
    if 0 in array.shape:
        raise DimensionError(f"Tensor extents must be positive, got shape {array.shape}")
    return check_finite(np.ascontiguousarray(array), "as_tensor")


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    """Raise :class:`NumericError` if ``x`` holds NaN or Inf."""
    if not np.all(np.isfinite(x)):
        raise NumericError("Non-finite values encountered", layer=where)
    return x


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of ``[M, K]`` and ``[K, N]``."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return np.matmul(a, b)


def elementwise(op: ElementwiseOp, a: Tensor, b: Union[Tensor, float]) -> Tensor:
    """Pointwise ``add``/``sub``/``mul`` of equal shapes, or ``scale`` by a scalar.

    Raises:
        DimensionError: If shapes differ or the operand kind does not fit ``op``.
    """
    if op == "scale":
        if not np.isscalar(b):
            raise DimensionError("scale expects a scalar second operand")
        return a * a.dtype.type(b)

    if np.isscalar(b):
        b = np.full_like(a, b)
    if a.shape != np.shape(b):
        raise DimensionError(f"elementwise {op} shape mismatch: {a.shape} vs {np.shape(b)}")
    if op == "add":
        return np.add(a, b)
    if op == "sub":
        return np.subtract(a, b)
    if op == "mul":
        return np.multiply(a, b)
    raise DimensionError(f"Unknown elementwise op {op!r}")


def reshape(x: Tensor, new_shape: Sequence[int]) -> Tensor:
    """Reinterpret ``x`` with a new shape of equal element count (row-major)."""
    new_shape = tuple(int(d) for d in new_shape)
    if int(np.prod(new_shape)) != x.size or any(d <= 0 for d in new_shape):
        raise DimensionError(f"Cannot reshape {x.shape} ({x.size} elements) to {new_shape}")
    return x.reshape(new_shape).copy()
