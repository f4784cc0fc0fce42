"""Post-hoc reports: training curves, filter grids and misclassification listings."""

import csv
import math
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import structlog
from matplotlib import rc_context
from matplotlib.figure import Figure

from ..errors import ConfigurationError, DataError, ReportError
from ..imgpipe import encode_graymap
from ..modelzoo import load_checkpoint
from ..tensor import Tensor
from .evaluator import EvaluationReport, MisclassifiedEntry, arch_from_checkpoint
from .history import EpochRecord, TrainingHistory

logger = structlog.get_logger()

HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")
MISCLASSIFIED_COLUMNS = (
    "source_id",
    "variant",
    "true_class",
    "predicted_class",
    "confidence",
    "top3",
)

# Fixed salt keeps SVG element ids stable between runs
_SVG_RC = {"svg.fonttype": "none", "svg.hashsalt": "statenet"}


def _series(history: TrainingHistory) -> List[Tuple[str, List[float]]]:
    records = history.records
    return [
        ("train_loss", [r.train_loss for r in records]),
        ("val_loss", [r.val_loss for r in records]),
        ("train_acc", [r.train_accuracy for r in records]),
        ("val_acc", [r.val_accuracy for r in records]),
    ]


def write_history_csv(history: TrainingHistory, path: Union[str, Path]) -> Path:
    """Write one row per epoch; floats use ``repr`` so they re-parse exactly."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for r in history.records:
            writer.writerow(
                [r.epoch, repr(r.train_loss), repr(r.train_accuracy), repr(r.val_loss), repr(r.val_accuracy)]
            )
    return path


def read_history_csv(path: Union[str, Path]) -> TrainingHistory:
    """Parse a CSV written by :func:`write_history_csv`.

    Raises:
        ReportError: If the header does not match the expected columns or a row is malformed.
    """
    path = Path(path)
    if not path.exists():
        raise ReportError(f"History file not found: {path}")
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != HISTORY_COLUMNS:
            raise ReportError(f"{path}: expected header {','.join(HISTORY_COLUMNS)}, got {header}")
        history = TrainingHistory()
        for lineno, row in enumerate(reader, start=2):
            try:
                epoch, train_loss, train_acc, val_loss, val_acc = row
                record = EpochRecord(int(epoch), float(train_loss), float(train_acc), float(val_loss), float(val_acc))
                history.add(record)
            except (ValueError, DataError) as e:
                raise ReportError(f"{path}:{lineno}: {e}") from e
    return history


def write_history_chart(history: TrainingHistory, path: Union[str, Path]) -> Path:
    """Loss and accuracy curves as an SVG with four labeled series."""
    path = Path(path)
    epochs = [r.epoch for r in history.records]
    series = dict(_series(history))

    with rc_context(_SVG_RC):
        fig = Figure(figsize=(10, 4))
        loss_ax, acc_ax = fig.subplots(1, 2)
        for ax, names, ylabel in (
            (loss_ax, ("train_loss", "val_loss"), "loss"),
            (acc_ax, ("train_acc", "val_acc"), "accuracy"),
        ):
            for name in names:
                ax.plot(epochs, series[name], marker="o", markersize=3, label=name, gid=name)
            ax.set_xlabel("epoch")
            ax.set_ylabel(ylabel)
            ax.legend()
            ax.grid(True, alpha=0.3)
        acc_ax.set_ylim(0.0, 1.0)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def export_history(history: TrainingHistory, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
    """Write ``history.csv`` and ``history.svg`` into ``out_dir``.

    Raises:
        ReportError: If the history has no records.
    """
    if not history.records:
        raise ReportError("Cannot export an empty training history")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = write_history_csv(history, out_dir / "history.csv")
    svg_path = write_history_chart(history, out_dir / "history.svg")
    logger.info("History exported", epochs=len(history), csv=str(csv_path), svg=str(svg_path))
    return csv_path, svg_path


def filter_grid(kernels: Tensor, tile_scale: int = 8, gap: int = 1) -> np.ndarray:
    """Tile each output channel's kernel (mean over input channels) into one image.

    Every tile is min-max normalized on its own; a constant kernel maps to
    mid-gray (0.5). Tiles are upscaled by ``tile_scale`` and separated by a
    ``gap`` of black pixels.

    Args:
        kernels: Convolution weights ``[C_out, C_in, k, k]``.

    Returns:
        ``uint8`` grayscale image.
    """
    if kernels.ndim != 4:
        raise ConfigurationError(f"Filter grid needs 4-D conv kernels, got shape {kernels.shape}")
    c_out, _, k, _ = kernels.shape
    cols = math.ceil(math.sqrt(c_out))
    rows = math.ceil(c_out / cols)
    side = k * tile_scale
    grid = np.zeros((rows * side + (rows - 1) * gap, cols * side + (cols - 1) * gap), dtype=np.uint8)

    for index, kernel in enumerate(np.asarray(kernels, dtype=np.float64).mean(axis=1)):
        lo, hi = kernel.min(), kernel.max()
        unit = np.full_like(kernel, 0.5) if hi == lo else (kernel - lo) / (hi - lo)
        tile = np.floor(unit * 255.0 + 0.5).astype(np.uint8)
        tile = np.kron(tile, np.ones((tile_scale, tile_scale), dtype=np.uint8))
        r, c = divmod(index, cols)
        top, left = r * (side + gap), c * (side + gap)
        grid[top : top + side, left : left + side] = tile
    return grid


def export_filter_grid(
    checkpoint_path: Union[str, Path], layer: str, out_path: Union[str, Path], tile_scale: int = 8
) -> Path:
    """Render one convolution layer of a checkpoint as a P5 graymap.

    Raises:
        ConfigurationError: If ``layer`` is not a convolution of the checkpoint.
    """
    checkpoint = load_checkpoint(checkpoint_path)
    arch = arch_from_checkpoint(checkpoint)
    if layer not in arch.layer_names:
        raise ConfigurationError(f"Layer '{layer}' not in architecture '{arch.name}'")
    if arch.layer(layer).kind not in ("conv3", "conv1"):
        raise ConfigurationError(f"Layer '{layer}' is a {arch.layer(layer).kind} layer, not a convolution")

    grid = filter_grid(checkpoint.params[f"{layer}.weight"], tile_scale=tile_scale)
    out_path = Path(out_path)
    out_path.write_bytes(encode_graymap(grid))
    logger.info("Filter grid written", layer=layer, tiles=checkpoint.params[f"{layer}.weight"].shape[0], path=str(out_path))
    return out_path


def report_misclassified(report: EvaluationReport, limit: Optional[int] = None) -> List[MisclassifiedEntry]:
    """Misclassified samples by descending predicted-class confidence.

    Ties keep the evaluation order. ``limit`` caps the number of rows.
    """
    if limit is not None and limit < 0:
        raise ConfigurationError(f"limit must be non-negative, got {limit}")
    rows = sorted(report.misclassified, key=lambda entry: -entry.confidence)
    return rows if limit is None else rows[:limit]


def write_misclassified_csv(rows: List[MisclassifiedEntry], path: Union[str, Path]) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(MISCLASSIFIED_COLUMNS)
        for entry in rows:
            top3 = ";".join(f"{name}={prob:.6f}" for name, prob in entry.top3)
            writer.writerow(
                [entry.source_id, entry.variant, entry.true_class, entry.predicted_class, f"{entry.confidence:.6f}", top3]
            )
    return path


def format_misclassified(rows: List[MisclassifiedEntry]) -> str:
    """Plain-text listing for the terminal."""
    if not rows:
        return "No misclassified samples."
    lines = []
    for entry in rows:
        top3 = ", ".join(f"{name} {prob:.3f}" for name, prob in entry.top3)
        lines.append(
            f"{entry.source_id} [{entry.variant}] true={entry.true_class} "
            f"predicted={entry.predicted_class} ({entry.confidence:.3f}) top3: {top3}"
        )
    return "\n".join(lines)
