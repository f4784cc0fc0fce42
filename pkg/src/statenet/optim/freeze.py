"""Layer freezing for transfer learning.

The bottom (pretrained) layers keep their weights while the added layers
and the new classification head are tuned.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, List, Literal, Mapping, Optional

import structlog

from ..errors import ConfigurationError
from .rmsprop import layer_of

if TYPE_CHECKING:
    from ..modelzoo.specs import ArchitectureSpec

logger = structlog.get_logger()

FreezeMode = Literal["pretrained-frozen", "all-trainable", "custom", "freeze-until"]


@dataclass(frozen=True)
class FreezePolicy:
    """Set of layer names excluded from optimizer updates."""

    frozen_layer_names: frozenset

    def is_frozen(self, param_name: str) -> bool:
        return layer_of(param_name) in self.frozen_layer_names

    def trainable(self, params: Mapping[str, object]) -> List[str]:
        """Names of parameters not covered by the policy, in parameter order."""
        return [name for name in params if not self.is_frozen(name)]


def build_freeze_policy(
    arch: "ArchitectureSpec",
    mode: FreezeMode,
    names: Optional[Iterable[str]] = None,
    loaded: Optional[Iterable[str]] = None,
) -> FreezePolicy:
    """Build a :class:`FreezePolicy` bound to ``arch``.

    Args:
        arch: Architecture whose layer names the policy refers to.
        mode: ``pretrained-frozen`` freezes layers loaded from a base manifest
            (or, when ``loaded`` is None, every ``origin=base`` layer);
            ``all-trainable`` freezes nothing; ``custom`` freezes exactly
            ``names``; ``freeze-until`` freezes every parameterised layer up to
            and including the single layer in ``names``.
        names: Layer names for ``custom`` / ``freeze-until``.
        loaded: Layer names that received base-manifest weights.

    Raises:
        ConfigurationError: If a name does not resolve to a layer of ``arch``.
    """
    layer_names = [layer.name for layer in arch.layers]
    if len(set(layer_names)) != len(layer_names):
        raise ConfigurationError(f"Architecture '{arch.name}' has duplicate layer names")
    parameterised = [layer.name for layer in arch.layers if layer.has_params]

    if mode == "all-trainable":
        frozen: Iterable[str] = ()
    elif mode == "pretrained-frozen":
        if loaded is None:
            frozen = [layer.name for layer in arch.layers if layer.has_params and layer.origin == "base"]
        else:
            frozen = list(loaded)
    elif mode in ("custom", "freeze-until"):
        names = list(names or ())
        unknown = [n for n in names if n not in layer_names]
        if unknown:
            raise ConfigurationError(f"Freeze list names unknown layers: {unknown}")
        if mode == "custom":
            frozen = names
        else:
            if len(names) != 1:
                raise ConfigurationError("freeze-until expects exactly one layer name")
            cut = layer_names.index(names[0])
            frozen = [n for n in parameterised if layer_names.index(n) <= cut]
    else:
        raise ConfigurationError(f"Unknown freeze mode {mode!r}")

    unknown = [n for n in frozen if n not in layer_names]
    if unknown:
        raise ConfigurationError(f"Frozen layers not in architecture: {unknown}")

    policy = FreezePolicy(frozenset(frozen))
    logger.info("Freeze policy built", mode=mode, frozen=sorted(policy.frozen_layer_names))
    return policy
