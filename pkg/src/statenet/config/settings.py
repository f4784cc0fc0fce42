"""Configuration management for statenet.

Process-wide settings come from environment variables (``STATENET_*``) and
an optional ``.env`` file using pydantic-settings. Per-run hyperparameters
live in :class:`TrainingConfig`, loaded from ``key = value`` files with CLI
overrides on top.
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from ..errors import ConfigurationError

# VGG ImageNet means, RGB order
DEFAULT_CHANNEL_MEANS: Tuple[float, float, float] = (123.68, 116.779, 103.939)


class Settings(BaseSettings):
    """Process settings with validation and environment variable support."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="STATENET_",
        case_sensitive=False,
        extra="ignore",
    )

    log_level: str = Field(default="INFO", description="Logging level")
    log_format: Literal["console", "json"] = Field(
        default="console", description="structlog renderer"
    )
    deterministic: bool = Field(
        default=False,
        description="Force bitwise-reproducible execution (sequential decoding)",
    )
    decode_workers: int = Field(
        default=4, ge=1, description="Worker threads used to decode images"
    )
    channel_means: Tuple[float, float, float] = Field(
        default=DEFAULT_CHANNEL_MEANS,
        description="Per-channel means subtracted in channel-mean normalization",
    )


# Global settings instance
settings = Settings()


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class TrainingConfig(BaseModel):
    """All hyperparameters of a training run.

    Defaults match the values stated for the tuned networks: RMSprop at a
    constant learning rate of 1e-4, batches of 16, 50 epochs, dropout 0.2
    and (for Architecture-2) an L2 penalty of 0.01.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    arch: Literal["arch1", "arch2"] = "arch1"
    epochs: int = Field(default=50, ge=1)
    batch_size: int = Field(default=16, ge=1)
    lr: float = Field(default=1e-4, ge=0.0)
    rho: float = Field(default=0.9, ge=0.0, lt=1.0)
    epsilon: float = Field(default=1e-8, gt=0.0)
    dropout: float = Field(default=0.2, ge=0.0, lt=1.0)
    l2_lambda: float = Field(default=0.01, ge=0.0)
    l2_scope: Optional[List[str]] = None
    seed: int = Field(default=0, ge=0)
    width_divisor: int = Field(default=1, ge=1)
    input_size: int = Field(default=224, ge=32)
    normalize: Literal["unit-scale", "channel-mean"] = "unit-scale"
    channel_means: Tuple[float, float, float] = Field(
        default_factory=lambda: settings.channel_means
    )
    freeze: Literal["pretrained-frozen", "all-trainable", "custom", "freeze-until"] = (
        "pretrained-frozen"
    )
    freeze_layers: List[str] = Field(default_factory=list)
    load_policy: Literal["strict", "by-name-prefix"] = "by-name-prefix"
    split_mode: Literal["leakage-safe", "per-sample"] = "leakage-safe"
    split_ratios: Tuple[float, float, float] = (0.7, 0.2, 0.1)
    keep_epoch_checkpoints: bool = False
    target_train_accuracy: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    deterministic: bool = Field(default_factory=lambda: settings.deterministic)

    @field_validator("l2_scope", "freeze_layers", "split_ratios", "channel_means", mode="before")
    @classmethod
    def _parse_lists(cls, value: Any) -> Any:
        return _split_list(value)

    @field_validator("input_size")
    @classmethod
    def _check_input_size(cls, value: int) -> int:
        if value % 32:
            raise ValueError("input_size must be a multiple of 32 (five 2x2 pools)")
        return value

    @field_validator("split_ratios")
    @classmethod
    def _check_ratios(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(r < 0 for r in value) or abs(sum(value) - 1.0) > 1e-9:
            raise ValueError("split_ratios must be non-negative and sum to 1")
        return value

    @model_validator(mode="after")
    def _check_freeze(self) -> "TrainingConfig":
        if self.freeze in ("custom", "freeze-until") and not self.freeze_layers:
            raise ValueError(f"freeze mode '{self.freeze}' needs freeze_layers")
        return self

    def to_lines(self) -> str:
        """Render the config as a ``key = value`` document.

        Returns:
            Text that :func:`load_training_config` parses back to an equal config.
        """
        lines = []
        for key, value in self.model_dump().items():
            if value is None:
                continue
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, (list, tuple)):
                text = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"


def parse_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Parse a ``key = value`` config file.

    Blank lines and ``#`` comments are ignored; later keys win.

    Args:
        path: Config file to read.

    Returns:
        Raw string values keyed by config name.

    Raises:
        ConfigurationError: If the file is missing or a line is malformed.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Config file not found: {path}")

    values: Dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"{path}:{lineno}: empty key")
        values[key.replace("-", "_")] = value
    return values


def load_training_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> TrainingConfig:
    """Build a :class:`TrainingConfig` from a file plus CLI overrides.

    Args:
        path: Optional ``key = value`` file.
        overrides: Values taking precedence over the file; ``None`` entries are skipped.

    Returns:
        Validated training configuration.

    Raises:
        ConfigurationError: If any value fails validation or a key is unknown.
    """
    values: Dict[str, Any] = parse_config_file(path) if path is not None else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    try:
        return TrainingConfig(**values)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid training config: {e}") from e
