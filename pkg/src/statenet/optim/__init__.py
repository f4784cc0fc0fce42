"""Optimization package: RMSprop and layer freezing."""

from .freeze import FreezePolicy, build_freeze_policy
from .rmsprop import RMSprop, RMSpropState, layer_of, rmsprop_step

__all__ = ["FreezePolicy", "RMSprop", "RMSpropState", "build_freeze_policy", "layer_of", "rmsprop_step"]
