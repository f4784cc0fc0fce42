"""Shared fixtures: tiny architectures, synthetic datasets and configs."""

from pathlib import Path

import numpy as np
import pytest

from statenet.config import TrainingConfig
from statenet.imgpipe import generate_synthetic_dataset


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Four 32x32 images per class."""
    root = tmp_path_factory.mktemp("tiny_dataset")
    generate_synthetic_dataset(root, per_class=4, size=32, seed=7)
    return root


@pytest.fixture(scope="session")
def synthetic_dataset(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Ten 64x64 images per class, the desk-scale overfit set."""
    root = tmp_path_factory.mktemp("synthetic_dataset")
    generate_synthetic_dataset(root, per_class=10, size=64, seed=0)
    return root


def make_config(**overrides) -> TrainingConfig:
    """Small, fast, deterministic training config."""
    values = dict(
        arch="arch1",
        epochs=2,
        batch_size=16,
        width_divisor=16,
        input_size=32,
        seed=3,
        freeze="all-trainable",
        deterministic=True,
    )
    values.update(overrides)
    return TrainingConfig(**values)


@pytest.fixture
def tiny_config() -> TrainingConfig:
    return make_config()


@pytest.fixture
def config_factory():
    return make_config


@pytest.fixture(scope="session")
def trained_run(tmp_path_factory: pytest.TempPathFactory, tiny_dataset: Path) -> Path:
    """Run directory of a two-epoch training run on the tiny dataset."""
    from statenet.harness import train

    out = tmp_path_factory.mktemp("run")
    train(make_config(), tiny_dataset, out)
    return out
