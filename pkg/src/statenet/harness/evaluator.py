"""Evaluation and single-image inference for trained checkpoints."""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, ValidationError
from sklearn.metrics import confusion_matrix

from ..config import TrainingConfig
from ..errors import ConfigurationError, DataError, LoadError
from ..imgpipe import CLASS_REGISTRY, LabeledSample, normalize, read_image, resize_bilinear
from ..layers import softmax
from ..modelzoo import ArchitectureSpec, Checkpoint, forward, load_checkpoint, param_shapes
from ..tensor import Tensor
from .data import build_model_arch, compute_threads, load_directory, prepare_dataset, to_arrays

logger = structlog.get_logger()

EvalSplit = Literal["train", "val", "test", "dir"]
CheckpointLike = Union[str, Path, Checkpoint]


class MisclassifiedEntry(BaseModel):
    """One wrongly predicted sample."""

    source_id: str
    variant: str
    true_class: str
    predicted_class: str
    confidence: float
    top3: List[Tuple[str, float]]


class EvaluationReport(BaseModel):
    """Accuracy, confusion matrix and error listing for one evaluated split.

    Rows of ``confusion_matrix`` are true classes, columns predicted classes,
    both in class-registry order.
    """

    split: str
    class_names: List[str]
    sample_count: int
    accuracy: float
    confusion_matrix: List[List[int]]
    per_class_accuracy: List[Optional[float]]
    misclassified: List[MisclassifiedEntry]

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EvaluationReport":
        path = Path(path)
        if not path.exists():
            raise DataError(f"Evaluation report not found: {path}")
        try:
            return cls.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as e:
            raise DataError(f"Malformed evaluation report {path}: {e}") from e


@dataclass(frozen=True)
class Prediction:
    """Predicted class of one image with the full probability vector."""

    class_index: int
    class_name: str
    probabilities: Dict[str, float]

    def top(self, k: int = 3) -> List[Tuple[str, float]]:
        ranked = sorted(self.probabilities.items(), key=lambda item: -item[1])
        return ranked[:k]


def _as_checkpoint(checkpoint: CheckpointLike) -> Checkpoint:
    return checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)


def config_from_checkpoint(checkpoint: Checkpoint) -> TrainingConfig:
    """Training config stored in a checkpoint's metadata.

    Raises:
        LoadError: If the metadata holds no valid config.
    """
    if not checkpoint.config:
        raise LoadError("Checkpoint metadata has no training config")
    try:
        return TrainingConfig(**checkpoint.config)
    except ValidationError as e:
        raise LoadError(f"Checkpoint config is invalid: {e}") from e


def arch_from_checkpoint(checkpoint: Checkpoint) -> ArchitectureSpec:
    """Rebuild the architecture a checkpoint was trained with.

    Raises:
        ConfigurationError: If the checkpoint's class count differs from the registry.
        LoadError: If the parameters do not fit the rebuilt architecture.
    """
    arch = build_model_arch(config_from_checkpoint(checkpoint))
    stored_names = checkpoint.metadata.get("class_names", list(CLASS_REGISTRY.names))
    if len(stored_names) != len(CLASS_REGISTRY):
        raise ConfigurationError(
            f"Checkpoint has {len(stored_names)} classes, registry has {len(CLASS_REGISTRY)}"
        )

    shapes = param_shapes(arch)
    for name, shape in shapes.items():
        if name not in checkpoint.params:
            raise LoadError(f"Checkpoint is missing parameter {name}")
        if tuple(checkpoint.params[name].shape) != shape:
            raise LoadError(f"Parameter {name} has shape {checkpoint.params[name].shape}, expected {shape}")
    logits_layer = [l for l in arch.layers if l.has_params][-1]
    if checkpoint.params[f"{logits_layer.name}.bias"].shape[0] != len(CLASS_REGISTRY):
        raise ConfigurationError("Checkpoint classifier width does not match the class registry")
    return arch


def predict_proba(
    arch: ArchitectureSpec, params: Dict[str, Tensor], x: Tensor, batch_size: int = 16
) -> np.ndarray:
    """Eval-mode class probabilities ``[N, 7]`` in float64."""
    chunks = []
    for start in range(0, len(x), batch_size):
        logits, _ = forward(arch, params, x[start : start + batch_size], "eval")
        chunks.append(softmax(logits.astype(np.float64)))
    if not chunks:
        return np.zeros((0, len(CLASS_REGISTRY)), dtype=np.float64)
    return np.concatenate(chunks)


def build_evaluation_report(
    split_name: str,
    samples: Sequence[LabeledSample],
    probabilities: np.ndarray,
) -> EvaluationReport:
    """Score predictions (argmax, ties to the lowest index) against sample labels."""
    names = list(CLASS_REGISTRY.names)
    y_true = np.array([s.class_index for s in samples], dtype=np.int64)
    y_pred = np.argmax(probabilities, axis=1)
    matrix = confusion_matrix(y_true, y_pred, labels=list(range(len(names))))

    total = int(matrix.sum())
    accuracy = int(np.trace(matrix)) / total if total else 0.0
    row_totals = matrix.sum(axis=1)
    per_class = [
        int(matrix[i, i]) / int(row_totals[i]) if row_totals[i] else None for i in range(len(names))
    ]

    misclassified = []
    for sample, probs, predicted in zip(samples, probabilities, y_pred):
        if predicted == sample.class_index:
            continue
        order = np.argsort(-probs, kind="stable")[:3]
        misclassified.append(
            MisclassifiedEntry(
                source_id=sample.source_id,
                variant=sample.variant.value,
                true_class=names[sample.class_index],
                predicted_class=names[int(predicted)],
                confidence=float(probs[predicted]),
                top3=[(names[int(i)], float(probs[i])) for i in order],
            )
        )

    return EvaluationReport(
        split=split_name,
        class_names=names,
        sample_count=total,
        accuracy=accuracy,
        confusion_matrix=matrix.astype(int).tolist(),
        per_class_accuracy=per_class,
        misclassified=misclassified,
    )


def evaluate(
    checkpoint: CheckpointLike,
    data_root: Union[str, Path],
    split_name: EvalSplit = "test",
) -> EvaluationReport:
    """Evaluate a checkpoint on one split of a dataset.

    ``train``/``val``/``test`` re-derive the run's seeded split from
    ``data_root``; ``dir`` evaluates every original image in ``data_root``.

    Raises:
        DataError: If the selected split is empty.
        ConfigurationError: On a class-count mismatch or unknown split.
    """
    checkpoint = _as_checkpoint(checkpoint)
    config = config_from_checkpoint(checkpoint)
    arch = arch_from_checkpoint(checkpoint)

    if split_name == "dir":
        samples = load_directory(config, data_root)
    elif split_name in ("train", "val", "test"):
        samples = prepare_dataset(config, data_root).select(split_name)
    else:
        raise ConfigurationError(f"Unknown evaluation split '{split_name}'")
    if not samples:
        raise DataError(f"Split '{split_name}' of {data_root} is empty")

    x, _ = to_arrays(samples, config)
    with compute_threads(config):
        probabilities = predict_proba(arch, checkpoint.params, x, config.batch_size)
    report = build_evaluation_report(split_name, samples, probabilities)
    logger.info(
        "Evaluation completed",
        split=split_name,
        samples=report.sample_count,
        accuracy=round(report.accuracy, 4),
        misclassified=len(report.misclassified),
    )
    return report


def predict(checkpoint: CheckpointLike, image_path: Union[str, Path]) -> Prediction:
    """Classify one P6 image.

    Raises:
        DecodeError: If the image cannot be decoded.
    """
    checkpoint = _as_checkpoint(checkpoint)
    config = config_from_checkpoint(checkpoint)
    arch = arch_from_checkpoint(checkpoint)

    pixels = resize_bilinear(read_image(image_path), config.input_size)
    x = normalize(pixels, config.normalize, config.channel_means)[None].astype(np.float32)
    with compute_threads(config):
        probs = predict_proba(arch, checkpoint.params, x)[0]
    index = int(np.argmax(probs))
    names = CLASS_REGISTRY.names
    prediction = Prediction(index, names[index], {name: float(p) for name, p in zip(names, probs)})
    logger.info("Prediction", image=str(image_path), class_name=prediction.class_name, confidence=round(float(probs[index]), 4))
    return prediction
