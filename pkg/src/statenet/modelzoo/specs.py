"""Declarative VGG-16 based architectures.

``build_vgg16_base`` is the 13-convolution feature extractor. The two
tuned networks keep the base convolutions (and its first four pools), add
a 3x3 convolution before the fifth pool and replace the classifier:

* Architecture-1: flatten, FC-4096, dropout, FC-128, dropout, FC-7.
* Architecture-2: 1x1 convolution, global average pooling, dropout, FC-7,
  with an L2 penalty on the dense weights.

``width_divisor`` shrinks every channel/unit width (the 7-way output is
never scaled) so the exact topology can be trained on a laptop.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple

from ..errors import ConfigurationError, DimensionError

LayerKind = Literal["conv3", "conv1", "maxpool", "gap", "dense", "relu", "dropout", "flatten"]
Origin = Literal["base", "added"]

NUM_CLASSES = 7
VGG16_BLOCKS: Tuple[Tuple[int, int], ...] = ((64, 2), (128, 2), (256, 3), (512, 3), (512, 3))
DEFAULT_DROPOUT = 0.2
DEFAULT_L2 = 0.01
KERNEL_SIZE = {"conv3": 3, "conv1": 1}
PARAM_KINDS = ("conv3", "conv1", "dense")


@dataclass(frozen=True)
class LayerSpec:
    """One row of an architecture table.

    Attributes:
        name: Unique layer name (``conv{block}_{index}``, ``pool{block}``, ``fc{index}`` ...).
        kind: Layer kind.
        size: Output channels (conv) or units (dense); 0 for other kinds.
        rate: Drop rate for dropout layers.
        trainable: Whether the optimizer updates this layer.
        origin: ``base`` for VGG-16 layers, ``added`` for the tuned additions.
    """

    name: str
    kind: LayerKind
    size: int = 0
    rate: float = 0.0
    trainable: bool = True
    origin: Origin = "base"

    def __post_init__(self) -> None:
        if self.kind in PARAM_KINDS and self.size < 1:
            raise ConfigurationError(f"Layer '{self.name}' ({self.kind}) needs a positive size")
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise ConfigurationError(f"Layer '{self.name}' has dropout rate {self.rate} outside [0, 1)")

    @property
    def has_params(self) -> bool:
        return self.kind in PARAM_KINDS

    @property
    def kernel_size(self) -> int:
        return KERNEL_SIZE[self.kind]


@dataclass(frozen=True)
class L2Spec:
    """L2 penalty strength and the layer names whose weights it covers."""

    lam: float
    scope: Tuple[str, ...]


@dataclass(frozen=True)
class ArchitectureSpec:
    """Ordered, immutable network description."""

    name: str
    input_shape: Tuple[int, int, int]
    layers: Tuple[LayerSpec, ...]
    l2: Optional[L2Spec] = None
    width_divisor: int = 1

    def layer(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise ConfigurationError(f"Architecture '{self.name}' has no layer '{name}'")

    @property
    def layer_names(self) -> List[str]:
        return [layer.name for layer in self.layers]

    def with_frozen(self, frozen: Iterable[str]) -> "ArchitectureSpec":
        """Copy with ``trainable`` cleared on the named layers."""
        frozen = set(frozen)
        layers = tuple(replace(layer, trainable=layer.name not in frozen) for layer in self.layers)
        return replace(self, layers=layers)


@dataclass(frozen=True)
class LayerShape:
    """Per-sample input and output shape of one layer."""

    name: str
    kind: LayerKind
    in_shape: Tuple[int, ...]
    out_shape: Tuple[int, ...]


def propagate_shapes(arch: ArchitectureSpec, require_logits: bool = True) -> List[LayerShape]:
    """Propagate the per-sample shape through every layer.

    Raises:
        DimensionError: If a layer cannot accept its input (odd pooling
            extent, dense on a feature map, ...) or the output is not 7 logits.
    """
    shape: Tuple[int, ...] = tuple(arch.input_shape)
    shapes = []
    for layer in arch.layers:
        in_shape = shape
        if layer.kind in ("conv3", "conv1"):
            if len(shape) != 3:
                raise DimensionError(f"Build error at '{layer.name}': conv needs [C,H,W], got {shape}")
            shape = (layer.size, shape[1], shape[2])
        elif layer.kind == "maxpool":
            if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
                raise DimensionError(f"Build error at '{layer.name}': cannot 2x2-pool {shape}")
            shape = (shape[0], shape[1] // 2, shape[2] // 2)
        elif layer.kind == "gap":
            if len(shape) != 3:
                raise DimensionError(f"Build error at '{layer.name}': GAP needs [C,H,W], got {shape}")
            shape = (shape[0],)
        elif layer.kind == "flatten":
            shape = (shape[0] * shape[1] * shape[2],) if len(shape) == 3 else shape
        elif layer.kind == "dense":
            if len(shape) != 1:
                raise DimensionError(f"Build error at '{layer.name}': dense needs a vector, got {shape}")
            shape = (layer.size,)
        shapes.append(LayerShape(layer.name, layer.kind, in_shape, shape))

    if require_logits and shape != (NUM_CLASSES,):
        raise DimensionError(f"Architecture '{arch.name}' emits {shape}, expected ({NUM_CLASSES},) logits")
    return shapes


def param_shapes(arch: ArchitectureSpec) -> Dict[str, Tuple[int, ...]]:
    """Shapes of every parameter tensor, keyed ``<layer>.weight`` / ``<layer>.bias``."""
    shapes: Dict[str, Tuple[int, ...]] = {}
    for entry, layer in zip(propagate_shapes(arch, require_logits=False), arch.layers):
        if layer.kind in ("conv3", "conv1"):
            k = layer.kernel_size
            shapes[f"{layer.name}.weight"] = (layer.size, entry.in_shape[0], k, k)
            shapes[f"{layer.name}.bias"] = (layer.size,)
        elif layer.kind == "dense":
            shapes[f"{layer.name}.weight"] = (entry.in_shape[0], layer.size)
            shapes[f"{layer.name}.bias"] = (layer.size,)
    return shapes


@dataclass(frozen=True)
class ParamCount:
    per_layer: Dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.per_layer.values())

    def subtotal(self, names: Iterable[str]) -> int:
        return sum(self.per_layer[name] for name in names)


def param_count(arch: ArchitectureSpec) -> ParamCount:
    """Closed-form parameter counts: ``k*k*Cin*Cout + Cout`` for conv, ``F*U + U`` for dense."""
    per_layer = {}
    for entry, layer in zip(propagate_shapes(arch, require_logits=False), arch.layers):
        if layer.kind in ("conv3", "conv1"):
            k = layer.kernel_size
            per_layer[layer.name] = k * k * entry.in_shape[0] * layer.size + layer.size
        elif layer.kind == "dense":
            per_layer[layer.name] = entry.in_shape[0] * layer.size + layer.size
        else:
            per_layer[layer.name] = 0
    return ParamCount(per_layer)


def head_layers(arch: ArchitectureSpec) -> List[str]:
    """Layers after the last max pool (the classification head)."""
    names = arch.layer_names
    last_pool = max(i for i, layer in enumerate(arch.layers) if layer.kind == "maxpool")
    return names[last_pool + 1 :]


def table_rows(arch: ArchitectureSpec) -> List[str]:
    """Architecture rows in table notation (ReLU and flatten are implicit there)."""
    rows = []
    for layer in arch.layers:
        if layer.kind == "conv3":
            rows.append(f"Conv3-{layer.size}")
        elif layer.kind == "conv1":
            rows.append(f"Conv1-{layer.size}")
        elif layer.kind == "maxpool":
            rows.append("Maxpool")
        elif layer.kind == "gap":
            rows.append("Global Average Pooling")
        elif layer.kind == "dense":
            rows.append(f"FC-{layer.size}")
        elif layer.kind == "dropout":
            rows.append(f"Dropout {layer.rate}")
    return rows


def _check_divisor(width_divisor: int) -> None:
    if width_divisor < 1 or 64 % width_divisor:
        raise ConfigurationError(f"width_divisor must divide 64, got {width_divisor}")


def _check_input_size(input_size: int) -> None:
    if input_size < 32 or input_size % 32:
        raise ConfigurationError(f"input_size must be a positive multiple of 32, got {input_size}")


def _conv_block(name: str, kind: LayerKind, channels: int, origin: Origin) -> List[LayerSpec]:
    return [
        LayerSpec(name, kind, size=channels, origin=origin),
        LayerSpec(f"{name}_relu", "relu", origin=origin),
    ]


def _base_layers(width_divisor: int, include_last_pool: bool) -> List[LayerSpec]:
    layers: List[LayerSpec] = []
    for block, (channels, repeats) in enumerate(VGG16_BLOCKS, start=1):
        for index in range(1, repeats + 1):
            layers += _conv_block(f"conv{block}_{index}", "conv3", channels // width_divisor, "base")
        if block < len(VGG16_BLOCKS) or include_last_pool:
            layers.append(LayerSpec(f"pool{block}", "maxpool"))
    return layers


def _dense_width(width: int, width_divisor: int) -> int:
    return max(NUM_CLASSES, width // width_divisor)


def _finish(
    name: str,
    input_size: int,
    layers: Sequence[LayerSpec],
    width_divisor: int,
    l2: Optional[L2Spec] = None,
    require_logits: bool = True,
) -> ArchitectureSpec:
    names = [layer.name for layer in layers]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"Duplicate layer names in '{name}'")
    arch = ArchitectureSpec(name, (3, input_size, input_size), tuple(layers), l2, width_divisor)
    propagate_shapes(arch, require_logits=require_logits)
    if l2 is not None:
        for layer_name in l2.scope:
            if not arch.layer(layer_name).has_params:
                raise ConfigurationError(f"L2 scope layer '{layer_name}' has no weights")
    return arch


def build_vgg16_base(width_divisor: int = 1, input_size: int = 224) -> ArchitectureSpec:
    """The 13-convolution VGG-16 stack with a pool after each block and no head."""
    _check_divisor(width_divisor)
    _check_input_size(input_size)
    layers = _base_layers(width_divisor, include_last_pool=True)
    return _finish("vgg16_base", input_size, layers, width_divisor, require_logits=False)


def _added_conv_and_pool(width_divisor: int) -> List[LayerSpec]:
    return _conv_block("conv5_4", "conv3", 512 // width_divisor, "added") + [
        LayerSpec("pool5", "maxpool", origin="added")
    ]


def build_arch1(
    width_divisor: int = 1, input_size: int = 224, dropout: float = DEFAULT_DROPOUT
) -> ArchitectureSpec:
    """Tuned VGG-16 Architecture-1 (flatten + FC-4096 + FC-128 + FC-7 head)."""
    _check_divisor(width_divisor)
    _check_input_size(input_size)
    layers = _base_layers(width_divisor, include_last_pool=False) + _added_conv_and_pool(width_divisor)
    layers.append(LayerSpec("flatten", "flatten", origin="added"))
    for index, width in ((1, 4096), (2, 128)):
        layers += [
            LayerSpec(f"fc{index}", "dense", size=_dense_width(width, width_divisor), origin="added"),
            LayerSpec(f"fc{index}_relu", "relu", origin="added"),
            LayerSpec(f"fc{index}_dropout", "dropout", rate=dropout, origin="added"),
        ]
    layers.append(LayerSpec("fc3", "dense", size=NUM_CLASSES, origin="added"))
    return _finish("arch1", input_size, layers, width_divisor)


def build_arch2(
    width_divisor: int = 1,
    input_size: int = 224,
    dropout: float = DEFAULT_DROPOUT,
    l2_lambda: float = DEFAULT_L2,
    l2_scope: Optional[Sequence[str]] = None,
) -> ArchitectureSpec:
    """Tuned VGG-16 Architecture-2 (1x1 conv + GAP + dropout + FC-7, L2 on dense weights)."""
    _check_divisor(width_divisor)
    _check_input_size(input_size)
    layers = _base_layers(width_divisor, include_last_pool=False) + _added_conv_and_pool(width_divisor)
    layers += _conv_block("conv6_1", "conv1", 512 // width_divisor, "added")
    layers += [
        LayerSpec("gap", "gap", origin="added"),
        LayerSpec("gap_dropout", "dropout", rate=dropout, origin="added"),
        LayerSpec("fc1", "dense", size=NUM_CLASSES, origin="added"),
    ]
    scope = tuple(l2_scope) if l2_scope is not None else tuple(l.name for l in layers if l.kind == "dense")
    return _finish("arch2", input_size, layers, width_divisor, L2Spec(l2_lambda, scope))


def build_architecture(
    name: str,
    width_divisor: int = 1,
    input_size: int = 224,
    dropout: float = DEFAULT_DROPOUT,
    l2_lambda: float = DEFAULT_L2,
    l2_scope: Optional[Sequence[str]] = None,
) -> ArchitectureSpec:
    """Build ``arch1``, ``arch2`` or ``vgg16_base`` by name."""
    if name == "arch1":
        return build_arch1(width_divisor, input_size, dropout)
    if name == "arch2":
        return build_arch2(width_divisor, input_size, dropout, l2_lambda, l2_scope)
    if name == "vgg16_base":
        return build_vgg16_base(width_divisor, input_size)
    raise ConfigurationError(f"Unknown architecture '{name}'")
