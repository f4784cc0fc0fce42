"""Dense tensor helpers.

Tensors are NumPy arrays of 32-bit reals (64-bit in gradient-check mode),
row-major, NCHW for activations and OIHW for convolution kernels.
"""

from .core import Tensor, as_tensor, check_finite, elementwise, matmul, reshape

__all__ = ["Tensor", "as_tensor", "check_finite", "elementwise", "matmul", "reshape"]
