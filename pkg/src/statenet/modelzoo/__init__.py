"""Model zoo: VGG-16 based architectures, weights and network composition."""

from .network import ForwardCache, backward, forward, layer_seed
from .specs import (
    NUM_CLASSES,
    ArchitectureSpec,
    L2Spec,
    LayerShape,
    LayerSpec,
    ParamCount,
    build_arch1,
    build_arch2,
    build_architecture,
    build_vgg16_base,
    head_layers,
    param_count,
    param_shapes,
    propagate_shapes,
    table_rows,
)
from .weights import (
    Checkpoint,
    LoadReport,
    WeightManifest,
    extract_manifest,
    init_weights,
    load_checkpoint,
    load_weights_partial,
    save_checkpoint,
)

__all__ = [
    "NUM_CLASSES",
    "ArchitectureSpec",
    "Checkpoint",
    "ForwardCache",
    "L2Spec",
    "LayerShape",
    "LayerSpec",
    "LoadReport",
    "ParamCount",
    "WeightManifest",
    "backward",
    "build_arch1",
    "build_arch2",
    "build_architecture",
    "build_vgg16_base",
    "extract_manifest",
    "forward",
    "head_layers",
    "init_weights",
    "layer_seed",
    "load_checkpoint",
    "load_weights_partial",
    "param_count",
    "param_shapes",
    "propagate_shapes",
    "save_checkpoint",
    "table_rows",
]
