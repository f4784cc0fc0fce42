"""Weight persistence, initialization and partial loading.

File layout (all integers little-endian)::

    bytes 0..7    magic  b"STNTWGT1"
    bytes 8..15   uint64 length L of the index document
    bytes 16..    UTF-8 JSON index (sorted keys, no whitespace), L bytes
    then          blob: float32 tensors, row-major, concatenated in index order

The index lists ``name``, ``dtype`` (always ``"f32"``), ``shape`` and
``offset`` (bytes from the start of the blob) for every tensor, plus a
free-form ``metadata`` object. Checkpoints are weight files whose tensors
are prefixed ``param/`` and ``optim/``.
"""

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

import numpy as np
import numpy.typing as npt
import structlog
from pydantic import BaseModel, ValidationError

from ..errors import LoadError
from ..optim import RMSpropState
from ..tensor import Tensor
from .specs import ArchitectureSpec, param_shapes

logger = structlog.get_logger()

MAGIC = b"STNTWGT1"
HEADER = struct.Struct("<8sQ")
FORMAT_VERSION = 1
BYTES_PER_ELEMENT = 4

LoadPolicy = Literal["strict", "by-name-prefix"]
ParameterSet = Dict[str, Tensor]


class TensorEntry(BaseModel):
    name: str
    dtype: Literal["f32"] = "f32"
    shape: List[int]
    offset: int


class ManifestIndex(BaseModel):
    version: int = FORMAT_VERSION
    tensors: List[TensorEntry]
    metadata: Dict[str, Any] = {}


@dataclass
class WeightManifest:
    """Named float32 tensors plus JSON metadata."""

    tensors: Dict[str, Tensor] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        entries, chunks, offset = [], [], 0
        for name, tensor in self.tensors.items():
            data = np.ascontiguousarray(tensor, dtype="<f4").tobytes()
            entries.append(TensorEntry(name=name, shape=list(tensor.shape), offset=offset))
            chunks.append(data)
            offset += len(data)
        index = ManifestIndex(tensors=entries, metadata=self.metadata)
        document = json.dumps(index.model_dump(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        return HEADER.pack(MAGIC, len(document)) + document + b"".join(chunks)

    @classmethod
    def from_bytes(cls, data: bytes) -> "WeightManifest":
        """Parse a weight file, validating the index before touching the blob.

        Raises:
            LoadError: On bad magic, a corrupted index or a truncated blob.
        """
        if len(data) < HEADER.size:
            raise LoadError("Truncated header", len(data))
        magic, index_length = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise LoadError(f"Bad magic {magic!r}", 0)
        blob_start = HEADER.size + index_length
        if len(data) < blob_start:
            raise LoadError("Truncated index document", len(data))
        try:
            raw = json.loads(data[HEADER.size : blob_start].decode("utf-8"))
            index = ManifestIndex.model_validate(raw)
        except (UnicodeDecodeError, json.JSONDecodeError, ValidationError) as e:
            raise LoadError(f"Corrupted index: {e}", HEADER.size) from e
        if index.version != FORMAT_VERSION:
            raise LoadError(f"Unsupported format version {index.version}", HEADER.size)

        expected = 0
        for entry in index.tensors:
            if entry.offset != expected or not entry.shape or min(entry.shape) < 1:
                raise LoadError(f"Inconsistent index entry for '{entry.name}'", HEADER.size)
            expected += math.prod(entry.shape) * BYTES_PER_ELEMENT
        blob_length = len(data) - blob_start
        if blob_length != expected:
            raise LoadError(
                f"Blob holds {blob_length} bytes, index describes {expected}",
                blob_start + min(blob_length, expected),
            )

        tensors = {}
        for entry in index.tensors:
            count = math.prod(entry.shape)
            flat = np.frombuffer(data, dtype="<f4", count=count, offset=blob_start + entry.offset)
            tensors[entry.name] = flat.astype(np.float32).reshape(entry.shape)
        return cls(tensors, index.metadata)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "WeightManifest":
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise LoadError(f"Cannot read weight file {path}: {e}") from e
        return cls.from_bytes(data)


def _glorot_bound(shape: Tuple[int, ...]) -> float:
    if len(shape) == 4:
        receptive = shape[2] * shape[3]
        fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
    else:
        fan_in, fan_out = shape
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_weights(arch: ArchitectureSpec, seed: int, dtype: npt.DTypeLike = np.float32) -> ParameterSet:
    """Glorot-uniform weights and zero biases, drawn in layer order from one seeded stream."""
    rng = np.random.default_rng(seed)
    params: ParameterSet = {}
    for name, shape in param_shapes(arch).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            bound = _glorot_bound(shape)
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return params


@dataclass(frozen=True)
class LoadReport:
    """Outcome of a partial load."""

    loaded: List[str]
    skipped: List[str]
    unused: List[str]


def load_weights_partial(
    arch: ArchitectureSpec,
    manifest: WeightManifest,
    params: Mapping[str, Tensor],
    policy: LoadPolicy = "by-name-prefix",
) -> Tuple[ParameterSet, LoadReport]:
    """Copy manifest tensors into the layers whose names they carry.

    Tensors are matched by their ``<layer>.`` name prefix. Layers without a
    match keep the values from ``params``.

    Args:
        arch: Target architecture.
        manifest: Source weights.
        params: Initialized parameter set for ``arch``.
        policy: ``by-name-prefix`` loads whatever matches; ``strict`` also
            requires every ``origin=base`` layer to be matched and every
            manifest tensor to be used.

    Raises:
        LoadError: On a shape conflict, a half-present layer, or a strict-mode gap.
    """
    shapes = param_shapes(arch)
    out: ParameterSet = dict(params)
    loaded, skipped = [], []
    used = set()

    for layer in arch.layers:
        if not layer.has_params:
            continue
        keys = (f"{layer.name}.weight", f"{layer.name}.bias")
        present = [key in manifest.tensors for key in keys]
        if not any(present):
            skipped.append(layer.name)
            continue
        if not all(present):
            raise LoadError(f"Manifest holds only part of layer '{layer.name}'")
        for key in keys:
            source = manifest.tensors[key]
            if tuple(source.shape) != shapes[key]:
                raise LoadError(
                    f"Shape conflict for layer '{layer.name}': manifest {tuple(source.shape)} vs architecture {shapes[key]}"
                )
            out[key] = source.astype(params[key].dtype, copy=True)
            used.add(key)
        loaded.append(layer.name)

    unused = [name for name in manifest.tensors if name not in used]
    if policy == "strict":
        missing = [l.name for l in arch.layers if l.has_params and l.origin == "base" and l.name in skipped]
        if missing:
            raise LoadError(f"Strict load: base layers missing from manifest: {missing}")
        if unused:
            raise LoadError(f"Strict load: manifest tensors match no layer: {unused}")
    elif unused:
        logger.warning("Manifest tensors ignored", tensors=unused)

    logger.info("Weights loaded", loaded=len(loaded), skipped=skipped, policy=policy)
    return out, LoadReport(loaded, skipped, unused)


def extract_manifest(params: Mapping[str, Tensor], layers: Optional[List[str]] = None) -> WeightManifest:
    """Manifest of ``params`` restricted to the given layer names (all when None)."""
    tensors = {
        name: np.asarray(value, dtype=np.float32)
        for name, value in params.items()
        if layers is None or name.rsplit(".", 1)[0] in layers
    }
    return WeightManifest(tensors, {"kind": "weights"})


@dataclass
class Checkpoint:
    """Everything needed to resume training or evaluate a model."""

    params: ParameterSet
    optimizer_state: RMSpropState
    epoch: int
    history: List[Dict[str, Any]]
    metadata: Dict[str, Any]

    @property
    def val_accuracy(self) -> Optional[float]:
        return self.metadata.get("val_accuracy")

    @property
    def config(self) -> Dict[str, Any]:
        return self.metadata.get("config", {})


def save_checkpoint(
    path: Union[str, Path],
    params: Mapping[str, Tensor],
    optimizer_state: RMSpropState,
    epoch: int,
    history: List[Dict[str, Any]],
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write a checkpoint; ``metadata`` should include ``val_accuracy`` and ``config``."""
    tensors = {f"param/{name}": value for name, value in params.items()}
    tensors.update({f"optim/{name}": ms for name, ms in optimizer_state.mean_square.items()})
    meta = dict(metadata or {})
    meta.update(
        {
            "kind": "checkpoint",
            "epoch": epoch,
            "step_count": optimizer_state.step_count,
            "history": history,
        }
    )
    return WeightManifest(tensors, meta).save(path)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        LoadError: If the file is not a complete checkpoint.
    """
    manifest = WeightManifest.load(path)
    meta = manifest.metadata
    if meta.get("kind") != "checkpoint":
        raise LoadError(f"{path} is not a checkpoint")
    params = {k[len("param/") :]: v for k, v in manifest.tensors.items() if k.startswith("param/")}
    mean_square = {k[len("optim/") :]: v for k, v in manifest.tensors.items() if k.startswith("optim/")}
    unknown = [k for k in mean_square if k not in params]
    if unknown:
        raise LoadError(f"Optimizer state for unknown parameters: {unknown}")
    state = RMSpropState(mean_square, int(meta.get("step_count", 0)))
    return Checkpoint(params, state, int(meta["epoch"]), list(meta.get("history", [])), meta)
