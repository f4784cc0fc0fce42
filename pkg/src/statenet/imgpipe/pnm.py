"""Binary portable pixmap (P6) and graymap (P5) codecs.

Only 8-bit payloads (maxval 255) are accepted. Header fields may be
separated by any whitespace and interleaved with ``#`` comments; exactly
one whitespace byte separates maxval from the raster.
"""

from pathlib import Path
from typing import Tuple, Union

import numpy as np

from ..errors import DataError, DecodeError, DimensionError
from ..tensor import Tensor

WHITESPACE = b" \t\r\n\x0b\x0c"
MAXVAL = 255


def _skip_space_and_comments(data: bytes, pos: int) -> int:
    while pos < len(data):
        byte = data[pos : pos + 1]
        if byte == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif byte in WHITESPACE:
            pos += 1
        else:
            break
    return pos


def _parse_header(data: bytes, magic: bytes) -> Tuple[int, int, int]:
    """Return ``(width, height, payload_offset)`` after validating the header."""
    if len(data) < 2:
        raise DecodeError("Truncated header", len(data))
    if data[:2] != magic:
        raise DecodeError(f"Expected magic {magic!r}, got {data[:2]!r}", 0)
    if len(data) < 3 or data[2:3] not in WHITESPACE:
        raise DecodeError("Missing whitespace after magic", 2)

    pos = 2
    fields = []
    for label in ("width", "height", "maxval"):
        pos = _skip_space_and_comments(data, pos)
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise DecodeError(f"Expected integer {label}", start)
        fields.append((int(data[start:pos]), start))

    (width, width_at), (height, height_at), (maxval, maxval_at) = fields
    if width <= 0:
        raise DecodeError("Width must be positive", width_at)
    if height <= 0:
        raise DecodeError("Height must be positive", height_at)
    if maxval != MAXVAL:
        raise DecodeError(f"Unsupported maxval {maxval}; only {MAXVAL} is accepted", maxval_at)
    if pos >= len(data) or data[pos : pos + 1] not in WHITESPACE:
        raise DecodeError("Missing whitespace after maxval", pos)
    return width, height, pos + 1


def _payload(data: bytes, offset: int, count: int) -> np.ndarray:
    if len(data) - offset < count:
        raise DecodeError(
            f"Truncated payload: need {count} bytes, have {len(data) - offset}", len(data)
        )
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=offset)


def decode_image(data: bytes) -> Tensor:
    """Decode a P6 pixmap into a ``[3, H, W]`` float32 tensor with values 0..255.

    Raises:
        DecodeError: On a malformed header, unsupported maxval or short payload.
    """
    width, height, offset = _parse_header(data, b"P6")
    raster = _payload(data, offset, width * height * 3)
    return raster.reshape(height, width, 3).transpose(2, 0, 1).astype(np.float32)


def encode_image(img: Tensor) -> bytes:
    """Encode a ``[3, H, W]`` tensor as P6 (values rounded and clipped to 0..255)."""
    if img.ndim != 3 or img.shape[0] != 3:
        raise DimensionError(f"encode_image expects [3, H, W], got {img.shape}")
    _, height, width = img.shape
    raster = np.clip(np.rint(img), 0, MAXVAL).astype(np.uint8).transpose(1, 2, 0)
    return f"P6\n{width} {height}\n{MAXVAL}\n".encode("ascii") + raster.tobytes()


def decode_graymap(data: bytes) -> np.ndarray:
    """Decode a P5 graymap into an ``[H, W]`` uint8 array."""
    width, height, offset = _parse_header(data, b"P5")
    return _payload(data, offset, width * height).reshape(height, width).copy()


def encode_graymap(pixels: np.ndarray) -> bytes:
    """Encode an ``[H, W]`` uint8 array as P5."""
    if pixels.ndim != 2:
        raise DimensionError(f"encode_graymap expects [H, W], got {pixels.shape}")
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n{MAXVAL}\n".encode("ascii")
    return header + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def read_image(path: Union[str, Path]) -> Tensor:
    """Read and decode a P6 file, naming the file in any error."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DataError(f"Unreadable image {path}: {e}") from e
    try:
        return decode_image(data)
    except DecodeError as e:
        raise DecodeError(f"{path}: {e.reason}", e.offset) from e


def write_image(path: Union[str, Path], img: Tensor) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_image(img))
