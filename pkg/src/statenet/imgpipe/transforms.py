"""Image resampling, augmentation transforms and normalization.

Images are ``[3, H, W]`` float tensors. Bilinear sampling uses half-pixel
centres with edge clamping; rotation samples the source through the
inverse mapping and fills pixels that fall outside the frame with 0.
"""

import math
from typing import Literal, Sequence

import numpy as np
from scipy import ndimage

from ..config.settings import DEFAULT_CHANNEL_MEANS
from ..errors import ConfigurationError, DimensionError
from ..tensor import Tensor

FlipAxis = Literal["horizontal", "vertical"]
NormalizeMode = Literal["unit-scale", "channel-mean"]

ROTATION_DEGREES = 45.0


def _check_image(img: Tensor) -> None:
    if img.ndim != 3:
        raise DimensionError(f"Expected a [C, H, W] image, got shape {img.shape}")
    if img.shape[1] < 1 or img.shape[2] < 1:
        raise DimensionError(f"Image must be at least 1x1, got {img.shape[1:]}")


def _sample(img: Tensor, rows: np.ndarray, cols: np.ndarray, mode: str) -> Tensor:
    coords = np.stack([rows, cols])
    return np.stack(
        [ndimage.map_coordinates(channel, coords, order=1, mode=mode, cval=0.0) for channel in img]
    ).astype(img.dtype, copy=False)


def resize_bilinear(img: Tensor, out_height: int = 224, out_width: int = 0) -> Tensor:
    """Resize with bilinear interpolation.

    Args:
        img: ``[C, H, W]`` image.
        out_height: Target height.
        out_width: Target width (defaults to ``out_height``).

    Returns:
        ``[C, out_height, out_width]`` image; an unchanged size returns a copy.
    """
    _check_image(img)
    out_width = out_width or out_height
    if out_height < 1 or out_width < 1:
        raise DimensionError(f"Target size must be positive, got {out_height}x{out_width}")
    _, height, width = img.shape
    if (height, width) == (out_height, out_width):
        return img.copy()

    ys = np.clip((np.arange(out_height) + 0.5) * (height / out_height) - 0.5, 0, height - 1)
    xs = np.clip((np.arange(out_width) + 0.5) * (width / out_width) - 0.5, 0, width - 1)
    rows, cols = np.meshgrid(ys, xs, indexing="ij")
    return _sample(img, rows, cols, mode="nearest")


def rotate(img: Tensor, degrees: float) -> Tensor:
    """Rotate counterclockwise about the image centre, keeping the frame size."""
    _check_image(img)
    _, height, width = img.shape
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    theta = math.radians(degrees)
    cos, sin = math.cos(theta), math.sin(theta)

    ys, xs = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")
    # y axis points down; u/v are right/up offsets from the centre
    u, v = xs - cx, cy - ys
    src_u = cos * u + sin * v
    src_v = -sin * u + cos * v
    return _sample(img, cy - src_v, cx + src_u, mode="constant")


def rotate45(img: Tensor) -> Tensor:
    return rotate(img, ROTATION_DEGREES)


def flip(img: Tensor, axis: FlipAxis) -> Tensor:
    """Mirror left-right (``horizontal``) or top-bottom (``vertical``)."""
    _check_image(img)
    if axis == "horizontal":
        return img[:, :, ::-1].copy()
    if axis == "vertical":
        return img[:, ::-1, :].copy()
    raise ConfigurationError(f"Unknown flip axis {axis!r}")


def normalize(
    img: Tensor,
    mode: NormalizeMode,
    channel_means: Sequence[float] = DEFAULT_CHANNEL_MEANS,
) -> Tensor:
    """Scale pixel values for the network.

    ``unit-scale`` divides by 255; ``channel-mean`` subtracts per-channel means.
    """
    if mode == "unit-scale":
        return img / img.dtype.type(255.0)
    if mode == "channel-mean":
        if len(channel_means) != img.shape[0]:
            raise DimensionError(f"{len(channel_means)} channel means for {img.shape[0]} channels")
        means = np.asarray(channel_means, dtype=img.dtype)[:, None, None]
        return img - means
    raise ConfigurationError(f"Unknown normalization mode {mode!r}")
