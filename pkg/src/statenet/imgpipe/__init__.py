"""Image pipeline: decoding, resizing, augmentation and dataset splitting."""

from .dataset import (
    CLASS_REGISTRY,
    ClassRegistry,
    CookingState,
    LabeledSample,
    ManifestRecord,
    SplitPlan,
    Variant,
    augment,
    expand_manifest,
    load_samples,
    read_manifest,
    scan_dataset,
    scan_directory,
    split,
    write_manifest,
)
from .pnm import decode_graymap, decode_image, encode_graymap, encode_image, read_image, write_image
from .synthetic import generate_synthetic_dataset
from .transforms import flip, normalize, resize_bilinear, rotate, rotate45

__all__ = [
    "CLASS_REGISTRY",
    "ClassRegistry",
    "CookingState",
    "LabeledSample",
    "ManifestRecord",
    "SplitPlan",
    "Variant",
    "augment",
    "decode_graymap",
    "decode_image",
    "encode_graymap",
    "encode_image",
    "expand_manifest",
    "flip",
    "generate_synthetic_dataset",
    "load_samples",
    "normalize",
    "read_image",
    "read_manifest",
    "resize_bilinear",
    "rotate",
    "rotate45",
    "scan_dataset",
    "scan_directory",
    "split",
    "write_image",
    "write_manifest",
]
