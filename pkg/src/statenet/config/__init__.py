"""Application and run configuration package."""

from .settings import Settings, TrainingConfig, load_training_config, settings

__all__ = ["Settings", "TrainingConfig", "load_training_config", "settings"]
