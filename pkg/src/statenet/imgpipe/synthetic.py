"""Synthetic seven-class dataset for desk-scale checks.

Each class gets its own base colour and texture pattern; every image adds
a little seeded noise so no two files are identical.
"""

from pathlib import Path
from typing import List, Union

import numpy as np
import structlog

from ..errors import ConfigurationError
from .dataset import CLASS_REGISTRY, ClassRegistry
from .pnm import write_image

logger = structlog.get_logger()

BASE_COLOURS = (
    (220, 40, 40),
    (240, 200, 30),
    (40, 180, 60),
    (40, 80, 220),
    (235, 230, 215),
    (230, 120, 20),
    (150, 60, 170),
)


def _pattern(class_index: int, size: int) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size]
    stripe = max(1, size // 8)
    patterns = (
        np.zeros((size, size)),
        (ys // stripe) % 2,
        (xs // stripe) % 2,
        ((ys // stripe) + (xs // stripe)) % 2,
        ((ys + xs) // stripe) % 2,
        (xs % (stripe * 2) == 0).astype(float),
        ((ys % stripe == 0) & (xs % stripe == 0)).astype(float),
    )
    return patterns[class_index].astype(np.float32)


def make_synthetic_image(class_index: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Render one ``[3, size, size]`` image of the given class."""
    colour = np.asarray(BASE_COLOURS[class_index], dtype=np.float32)[:, None, None]
    texture = _pattern(class_index, size)[None, :, :]
    img = colour * (1.0 - 0.5 * texture) + rng.integers(-8, 9, size=(3, size, size))
    return np.clip(img, 0, 255).astype(np.float32)


def generate_synthetic_dataset(
    root: Union[str, Path],
    per_class: int = 10,
    size: int = 64,
    seed: int = 0,
    registry: ClassRegistry = CLASS_REGISTRY,
) -> List[Path]:
    """Write ``per_class`` P6 images per cooking state under ``root``.

    Returns:
        Paths of the written files, in class then index order.
    """
    if per_class < 1 or size < 1:
        raise ConfigurationError("per_class and size must be positive")
    root = Path(root)
    rng = np.random.default_rng(seed)
    paths = []
    for class_index, class_name in enumerate(registry.names):
        for i in range(per_class):
            path = root / class_name / f"{class_name}_{i:03d}.ppm"
            write_image(path, make_synthetic_image(class_index, size, rng))
            paths.append(path)
    logger.info("Synthetic dataset written", root=str(root), images=len(paths), size=size)
    return paths
