"""Dataset preparation shared by training and evaluation."""

from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path
from typing import ContextManager, List, Sequence, Tuple, Union

import numpy as np
import structlog
from threadpoolctl import threadpool_limits

from ..config import TrainingConfig, settings
from ..imgpipe import (
    CLASS_REGISTRY,
    LabeledSample,
    ManifestRecord,
    SplitPlan,
    augment,
    load_samples,
    normalize,
    scan_directory,
    split,
)
from ..modelzoo import ArchitectureSpec, build_architecture
from ..tensor import Tensor

logger = structlog.get_logger()


@dataclass
class PreparedDataset:
    """Originals, their augmented expansion and the split plan."""

    records: List[ManifestRecord]
    samples: List[LabeledSample]
    plan: SplitPlan

    def select(self, split_name: str) -> List[LabeledSample]:
        return self.plan.select(self.samples, split_name)


def is_deterministic(config: TrainingConfig) -> bool:
    return config.deterministic or settings.deterministic


def decode_workers(config: TrainingConfig) -> int:
    return 1 if is_deterministic(config) else settings.decode_workers


def compute_threads(config: TrainingConfig) -> ContextManager:
    """Single-threaded BLAS and OpenMP pools in deterministic mode, so matmul reductions keep one summation order."""
    if is_deterministic(config):
        return threadpool_limits(limits=1)
    return nullcontext()


def prepare_dataset(config: TrainingConfig, data_root: Union[str, Path]) -> PreparedDataset:
    """Ingest, augment and split a dataset directory as configured."""
    records = scan_directory(data_root)
    originals = load_samples(records, data_root, config.input_size, workers=decode_workers(config))
    samples = augment(originals)
    plan = split(
        samples,
        seed=config.seed,
        ratios=config.split_ratios,
        leakage_safe=config.split_mode == "leakage-safe",
    )
    logger.info("Dataset prepared", root=str(data_root), originals=len(records), samples=len(samples))
    return PreparedDataset(records, samples, plan)


def load_directory(config: TrainingConfig, data_root: Union[str, Path]) -> List[LabeledSample]:
    """Originals of an external directory, without augmentation."""
    records = scan_directory(data_root)
    return load_samples(records, data_root, config.input_size, workers=decode_workers(config))


def to_arrays(samples: Sequence[LabeledSample], config: TrainingConfig) -> Tuple[Tensor, np.ndarray]:
    """Stack normalized pixels into ``[N, 3, H, W]`` plus an ``[N]`` label vector."""
    if not samples:
        size = config.input_size
        return np.zeros((0, 3, size, size), dtype=np.float32), np.zeros(0, dtype=np.int64)
    x = np.stack([normalize(s.pixels, config.normalize, config.channel_means) for s in samples])
    y = np.array([s.class_index for s in samples], dtype=np.int64)
    return x.astype(np.float32, copy=False), y


def class_names() -> List[str]:
    return list(CLASS_REGISTRY.names)


def build_model_arch(config: TrainingConfig) -> ArchitectureSpec:
    """Architecture described by a training config."""
    return build_architecture(
        config.arch,
        width_divisor=config.width_divisor,
        input_size=config.input_size,
        dropout=config.dropout,
        l2_lambda=config.l2_lambda,
        l2_scope=config.l2_scope,
    )
