"""RMSprop optimizer with per-parameter freezing.

Each trainable parameter keeps a running mean of its squared gradient and
is updated as ``theta -= lr * g / sqrt(ms + epsilon)``. Frozen parameters
have no state entry and are returned untouched.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np
import structlog

from ..errors import DimensionError, NumericError
from ..tensor import Tensor

logger = structlog.get_logger()

DEFAULT_LR = 1e-4
DEFAULT_RHO = 0.9
DEFAULT_EPSILON = 1e-8

ParameterSet = Dict[str, Tensor]


def layer_of(param_name: str) -> str:
    """``"conv1_1.weight" -> "conv1_1"``."""
    return param_name.rsplit(".", 1)[0]


@dataclass
class RMSpropState:
    """Optimizer state: one mean-square tensor per trainable parameter."""

    mean_square: Dict[str, Tensor] = field(default_factory=dict)
    step_count: int = 0

    @classmethod
    def initial(cls, params: Mapping[str, Tensor], trainable: Iterable[str]) -> "RMSpropState":
        """Zero state for the given trainable parameter names."""
        return cls({name: np.zeros_like(params[name]) for name in trainable}, 0)

    @property
    def trainable(self) -> Tuple[str, ...]:
        return tuple(self.mean_square)

    def copy(self) -> "RMSpropState":
        return RMSpropState({k: v.copy() for k, v in self.mean_square.items()}, self.step_count)


def rmsprop_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Tensor],
    state: RMSpropState,
    lr: float = DEFAULT_LR,
    rho: float = DEFAULT_RHO,
    epsilon: float = DEFAULT_EPSILON,
) -> Tuple[ParameterSet, RMSpropState]:
    """Apply one RMSprop update to every parameter bound in ``state``.

    Args:
        params: Full parameter set, frozen parameters included.
        grads: Gradient per trainable parameter (extra entries are ignored).
        state: Optimizer state bound to the trainable parameters.
        lr: Learning rate.
        rho: Decay of the running mean square.
        epsilon: Added inside the square root.

    Returns:
        ``(new_params, new_state)``; inputs are not modified and frozen
        parameters are passed through as the same arrays.

    Raises:
        DimensionError: If a gradient is missing or mis-shaped.
        NumericError: If a gradient holds NaN/Inf.
    """
    new_params: ParameterSet = dict(params)
    new_ms: Dict[str, Tensor] = {}
    for name, ms in state.mean_square.items():
        if name not in grads:
            raise DimensionError(f"Missing gradient for trainable parameter {name}")
        theta, g = params[name], grads[name]
        if g.shape != theta.shape:
            raise DimensionError(f"Gradient for {name} has shape {g.shape}, parameter {theta.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("NaN or Inf in gradient", layer=layer_of(name))

        dtype = theta.dtype.type
        ms_new = dtype(rho) * ms + dtype(1.0 - rho) * np.square(g)
        new_params[name] = theta - dtype(lr) * g / np.sqrt(ms_new + dtype(epsilon))
        new_ms[name] = ms_new

    return new_params, RMSpropState(new_ms, state.step_count + 1)


class RMSprop:
    """Stateful wrapper owning the hyperparameters and state of one training run."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        trainable: Iterable[str],
        lr: float = DEFAULT_LR,
        rho: float = DEFAULT_RHO,
        epsilon: float = DEFAULT_EPSILON,
        state: Optional[RMSpropState] = None,
    ):
        """Initialize the optimizer.

        Args:
            params: Parameter set the state is bound to.
            trainable: Names of parameters that receive updates.
            lr: Learning rate.
            rho: Mean-square decay.
            epsilon: Denominator stabilizer.
            state: Existing state (e.g. restored from a checkpoint).
        """
        self.lr = lr
        self.rho = rho
        self.epsilon = epsilon
        self.state = state if state is not None else RMSpropState.initial(params, trainable)
        logger.debug(
            "RMSprop initialized",
            trainable=len(self.state.mean_square),
            lr=lr,
            rho=rho,
            epsilon=epsilon,
        )

    def step(self, params: Mapping[str, Tensor], grads: Mapping[str, Tensor]) -> ParameterSet:
        new_params, self.state = rmsprop_step(
            params, grads, self.state, self.lr, self.rho, self.epsilon
        )
        return new_params
