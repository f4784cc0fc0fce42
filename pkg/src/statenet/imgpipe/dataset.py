"""Dataset ingestion, offline augmentation and deterministic splitting.

A dataset root holds one directory per cooking state
(``<root>/<class_name>/<image>.ppm``). Every original image is expanded
into four variants (original, 45 degree rotation, horizontal and vertical
flip) before the stratified train/val/test split.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from ..errors import ConfigurationError, DataError, PipelineOrderError
from ..tensor import Tensor
from .pnm import read_image
from .transforms import flip, resize_bilinear, rotate45

logger = structlog.get_logger()

IMAGE_SUFFIX = ".ppm"
DEFAULT_RATIOS: Tuple[float, float, float] = (0.7, 0.2, 0.1)
SPLIT_NAMES = ("train", "val", "test")


class CookingState(Enum):
    """The seven cooking object states, in their canonical order."""

    WHOLE = "whole"
    JUICED = "juiced"
    SLICED = "sliced"
    DICED = "diced"
    CREAMY_PASTE = "creamy_paste"
    JULIENNE = "julienne"
    GRATED = "grated"


@dataclass(frozen=True)
class ClassRegistry:
    """Ordered class names; the position of a name is its class index."""

    names: Tuple[str, ...] = tuple(state.value for state in CookingState)

    def __post_init__(self) -> None:
        if len(self.names) != 7 or len(set(self.names)) != 7:
            raise ConfigurationError(f"Class registry needs 7 unique names, got {self.names}")

    def __len__(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"Unknown class name '{name}'") from None

    def name_of(self, index: int) -> str:
        if not 0 <= index < len(self.names):
            raise DataError(f"Class index {index} outside [0, {len(self.names)})")
        return self.names[index]


CLASS_REGISTRY = ClassRegistry()


class Variant(Enum):
    """Augmentation variant of a sample."""

    ORIGINAL = "original"
    ROT45 = "rot45"
    HFLIP = "hflip"
    VFLIP = "vflip"


@dataclass(frozen=True)
class ManifestRecord:
    """One line of a dataset manifest."""

    source_id: str
    variant: Variant
    class_name: str
    relative_path: str

    def to_line(self) -> str:
        return "\t".join((self.source_id, self.variant.value, self.class_name, self.relative_path))

    @classmethod
    def from_line(cls, line: str) -> "ManifestRecord":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 4:
            raise DataError(f"Manifest line needs 4 tab-separated fields: {line!r}")
        source_id, variant, class_name, relative_path = parts
        try:
            return cls(source_id, Variant(variant), class_name, relative_path)
        except ValueError:
            raise DataError(f"Unknown variant '{variant}' in manifest") from None


@dataclass(frozen=True)
class LabeledSample:
    """A decoded image with its label and provenance."""

    source_id: str
    variant: Variant
    class_index: int
    pixels: Tensor

    @property
    def key(self) -> str:
        """Identifier unique per augmented sample."""
        return f"{self.source_id}:{self.variant.value}"


def scan_dataset(root: Union[str, Path], registry: ClassRegistry = CLASS_REGISTRY) -> List[ManifestRecord]:
    """Enumerate original images under ``root`` in class order, then file name order.

    Raises:
        DataError: If ``root`` is not a directory.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"Dataset root is not a directory: {root}")

    unknown = sorted(p.name for p in root.iterdir() if p.is_dir() and p.name not in registry.names)
    if unknown:
        logger.warning("Ignoring directories that are not cooking states", directories=unknown)

    records = []
    for class_name in registry.names:
        class_dir = root / class_name
        if not class_dir.is_dir():
            logger.warning("Class directory missing", class_name=class_name)
            continue
        for path in sorted(class_dir.glob(f"*{IMAGE_SUFFIX}")):
            records.append(
                ManifestRecord(
                    source_id=f"{class_name}/{path.stem}",
                    variant=Variant.ORIGINAL,
                    class_name=class_name,
                    relative_path=path.relative_to(root).as_posix(),
                )
            )
    logger.info("Dataset scanned", root=str(root), images=len(records))
    return records


def scan_directory(root: Union[str, Path], registry: ClassRegistry = CLASS_REGISTRY) -> List[ManifestRecord]:
    """Like :func:`scan_dataset`, but an empty tree is an error."""
    records = scan_dataset(root, registry)
    if not records:
        raise DataError(f"No {IMAGE_SUFFIX} images found under {root}")
    return records


def expand_manifest(records: Iterable[ManifestRecord]) -> List[ManifestRecord]:
    """List the four augmentation variants of every original record."""
    expanded = []
    for record in records:
        if record.variant is not Variant.ORIGINAL:
            raise PipelineOrderError(f"{record.source_id} is already a '{record.variant.value}' variant")
        for variant in Variant:
            expanded.append(ManifestRecord(record.source_id, variant, record.class_name, record.relative_path))
    return expanded


def write_manifest(records: Iterable[ManifestRecord], path: Union[str, Path]) -> None:
    Path(path).write_text("".join(r.to_line() + "\n" for r in records), encoding="utf-8")


def read_manifest(path: Union[str, Path]) -> List[ManifestRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ManifestRecord.from_line(line) for line in lines if line.strip()]


def _load_one(args: Tuple[ManifestRecord, Path, int, ClassRegistry]) -> LabeledSample:
    record, root, input_size, registry = args
    pixels = resize_bilinear(read_image(root / record.relative_path), input_size)
    return LabeledSample(record.source_id, record.variant, registry.index_of(record.class_name), pixels)


def load_samples(
    records: Sequence[ManifestRecord],
    root: Union[str, Path],
    input_size: int,
    workers: int = 1,
    registry: ClassRegistry = CLASS_REGISTRY,
) -> List[LabeledSample]:
    """Decode and resize every record, preserving manifest order.

    Args:
        records: Original-variant manifest records.
        root: Dataset root the relative paths refer to.
        input_size: Square side length images are resized to.
        workers: Decoder threads; 1 decodes sequentially.
    """
    root = Path(root)
    jobs = [(record, root, input_size, registry) for record in records]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            samples = list(executor.map(_load_one, jobs))
    else:
        samples = [_load_one(job) for job in jobs]
    logger.info("Images decoded", count=len(samples), input_size=input_size, workers=workers)
    return samples


def augment(samples: Iterable[LabeledSample]) -> List[LabeledSample]:
    """Expand every original into original, rot45, hflip and vflip variants.

    Raises:
        PipelineOrderError: If any input is not an original.
    """
    out: List[LabeledSample] = []
    for sample in samples:
        if sample.variant is not Variant.ORIGINAL:
            raise PipelineOrderError(
                f"augment expects original samples, got '{sample.variant.value}' for {sample.source_id}"
            )
        img = sample.pixels
        for variant, pixels in (
            (Variant.ORIGINAL, img),
            (Variant.ROT45, rotate45(img)),
            (Variant.HFLIP, flip(img, "horizontal")),
            (Variant.VFLIP, flip(img, "vertical")),
        ):
            out.append(LabeledSample(sample.source_id, variant, sample.class_index, pixels))
    return out


@dataclass(frozen=True)
class SplitPlan:
    """Deterministic train/val/test assignment.

    With ``leakage_safe`` the keys are source ids, so every variant of an
    image shares one split; otherwise each augmented sample is keyed on its
    own (``source_id:variant``).
    """

    seed: int
    ratios: Tuple[float, float, float]
    assignment: Dict[str, str]
    leakage_safe: bool

    def key_for(self, sample: LabeledSample) -> str:
        return sample.source_id if self.leakage_safe else sample.key

    def split_of(self, sample: LabeledSample) -> str:
        try:
            return self.assignment[self.key_for(sample)]
        except KeyError:
            raise DataError(f"Sample {sample.key} is not covered by the split plan") from None

    def select(self, samples: Iterable[LabeledSample], split_name: str) -> List[LabeledSample]:
        if split_name not in SPLIT_NAMES:
            raise ConfigurationError(f"Unknown split '{split_name}'")
        return [s for s in samples if self.split_of(s) == split_name]

    def counts(self) -> Dict[str, int]:
        counts = {name: 0 for name in SPLIT_NAMES}
        for split_name in self.assignment.values():
            counts[split_name] += 1
        return counts

    def write(self, path: Union[str, Path]) -> None:
        lines = [f"{key}\t{split_name}\n" for key, split_name in self.assignment.items()]
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def read(cls, path: Union[str, Path], seed: int, ratios: Tuple[float, float, float], leakage_safe: bool) -> "SplitPlan":
        """Load a plan written by :meth:`write`.

        Raises:
            DataError: If the file is missing or a line is not ``key<TAB>split``.
        """
        path = Path(path)
        if not path.exists():
            raise DataError(f"Split file not found: {path}")
        assignment = {}
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected key<TAB>split, got {line!r}")
            key, split_name = parts
            if split_name not in SPLIT_NAMES:
                raise DataError(f"Unknown split '{split_name}' in {path}")
            assignment[key] = split_name
        return cls(seed, ratios, assignment, leakage_safe)


def _split_sizes(n: int, ratios: Tuple[float, float, float]) -> Tuple[int, int, int]:
    n_train = min(n, math.floor(n * ratios[0] + 0.5))
    n_val = min(n - n_train, math.floor(n * ratios[1] + 0.5))
    return n_train, n_val, n - n_train - n_val


def split(
    samples: Sequence[LabeledSample],
    seed: int,
    ratios: Tuple[float, float, float] = DEFAULT_RATIOS,
    leakage_safe: bool = True,
    registry: ClassRegistry = CLASS_REGISTRY,
) -> SplitPlan:
    """Stratified, seeded train/val/test assignment.

    Units (source ids, or individual samples when not leakage-safe) are
    shuffled per class with a generator seeded by ``(seed, class_index)``
    and cut at the rounded ratio boundaries.

    Raises:
        DataError: If a class has no samples.
    """
    units_by_class: Dict[int, set] = {i: set() for i in range(len(registry))}
    for sample in samples:
        units_by_class[sample.class_index].add(sample.source_id if leakage_safe else sample.key)

    assignment: Dict[str, str] = {}
    for class_index, unit_set in units_by_class.items():
        if not unit_set:
            raise DataError(f"Class '{registry.name_of(class_index)}' has no samples")
        units = sorted(unit_set)
        order = np.random.default_rng([seed, class_index]).permutation(len(units))
        n_train, n_val, _ = _split_sizes(len(units), ratios)
        for rank, position in enumerate(order):
            split_name = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
            assignment[units[position]] = split_name

    plan = SplitPlan(seed, tuple(ratios), dict(sorted(assignment.items())), leakage_safe)
    logger.info("Dataset split", leakage_safe=leakage_safe, seed=seed, **plan.counts())
    return plan
