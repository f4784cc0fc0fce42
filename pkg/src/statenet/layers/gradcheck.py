"""Central finite-difference gradient checking.

The numeric side always evaluates the objective on a float64 copy of the
input, so a float32 analytic gradient can be compared against it as well.
"""

from typing import Callable, Optional

import numpy as np

from ..tensor import Tensor

DEFAULT_STEP = 1e-5
DEFAULT_COORDINATES = 20
# Denominator floor: exact zeros on both sides compare equal, and gradients
# smaller than this are compared in absolute terms.
RELATIVE_FLOOR = 1e-10


def numerical_gradient_at(
    f: Callable[[Tensor], float], x: Tensor, index: tuple, step: float = DEFAULT_STEP
) -> float:
    """Central difference of ``f`` along one coordinate of ``x``."""
    plus = np.array(x, dtype=np.float64)
    minus = plus.copy()
    plus[index] += step
    minus[index] -= step
    return (float(f(plus)) - float(f(minus))) / (2.0 * step)


def relative_error(analytic: float, numeric: float) -> float:
    """``|a - n| / max(|a|, |n|, RELATIVE_FLOOR)``.

    Acceptance is ``< 1e-6`` for float64 inputs and ``< 1e-3`` for float32.
    """
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), RELATIVE_FLOOR)


def check_gradient(
    f: Callable[[Tensor], float],
    x: Tensor,
    analytic: Tensor,
    coordinates: int = DEFAULT_COORDINATES,
    step: float = DEFAULT_STEP,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Compare an analytic gradient with central differences at sampled coordinates.

    Args:
        f: Scalar objective of ``x``.
        x: Point at which the gradient was computed.
        analytic: Analytic gradient of ``f`` at ``x``.
        coordinates: Number of coordinates to probe (all of them if ``x`` is smaller).
        step: Finite-difference step.
        seed: Seed for coordinate sampling when ``rng`` is not given.

    Returns:
        Maximum relative error over the probed coordinates.
    """
    if analytic.shape != x.shape:
        raise ValueError(f"analytic gradient shape {analytic.shape} != input shape {x.shape}")
    rng = rng or np.random.default_rng(seed)
    flat = rng.choice(x.size, size=min(coordinates, x.size), replace=False)
    worst = 0.0
    for position in flat:
        index = np.unravel_index(position, x.shape)
        numeric = numerical_gradient_at(f, x, index, step)
        worst = max(worst, relative_error(float(analytic[index]), numeric))
    return worst
