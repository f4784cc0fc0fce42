"""Exception hierarchy shared by every statenet package.

Each error carries the process exit code the CLI returns when it escapes
a command.
"""

from typing import Optional


class StateNetError(Exception):
    """Base class for all statenet errors."""

    exit_code = 1


class ConfigurationError(StateNetError):
    """Invalid configuration, architecture or layer arguments."""

    exit_code = 1


class DimensionError(StateNetError):
    """Tensor shapes that do not agree for the requested operation."""

    exit_code = 2


class DataError(StateNetError):
    """Bad input data: labels, datasets, image files."""

    exit_code = 2


class DecodeError(DataError):
    """Malformed image payload.

    Args:
        message: Human-readable description.
        offset: Byte offset in the payload where decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.reason = message
        self.offset = offset


class PipelineOrderError(DataError):
    """Pipeline stages applied out of order (e.g. augmenting twice)."""


class LoadError(DataError):
    """Weight or checkpoint file that cannot be loaded."""

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ReportError(DataError):
    """Report export requested over empty or inconsistent inputs."""


class NumericError(StateNetError):
    """NaN or Inf produced during training.

    Args:
        message: Human-readable description.
        layer: Name of the layer (or stage) where the value appeared.
    """

    exit_code = 3

    def __init__(self, message: str, layer: Optional[str] = None):
        if layer is not None:
            message = f"{message} [layer={layer}]"
        super().__init__(message)
        self.layer = layer
