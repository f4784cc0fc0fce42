"""Per-epoch training records."""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional

from ..errors import DataError


@dataclass(frozen=True)
class EpochRecord:
    """Metrics of one completed epoch (eval-mode passes over train and val)."""

    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float

    def __post_init__(self) -> None:
        for name in ("train_accuracy", "val_accuracy"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DataError(f"{name} must lie in [0, 1], got {value}")


@dataclass
class TrainingHistory:
    """Ordered epoch records with best-epoch tracking."""

    records: List[EpochRecord] = field(default_factory=list)

    def add(self, record: EpochRecord) -> None:
        """Append the record of the next epoch.

        Raises:
            DataError: If the epoch number is not the next one in sequence.
        """
        expected = len(self.records) + 1
        if record.epoch != expected:
            raise DataError(f"Expected epoch {expected}, got {record.epoch}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def best_epoch(self) -> Optional[int]:
        """Epoch with the highest validation accuracy; ties go to the earliest."""
        if not self.records:
            return None
        best = max(self.records, key=lambda r: (r.val_accuracy, -r.epoch))
        return best.epoch

    @property
    def best_record(self) -> Optional[EpochRecord]:
        best = self.best_epoch
        return None if best is None else self.records[best - 1]

    def to_dicts(self) -> List[Dict[str, Any]]:
        return [asdict(record) for record in self.records]

    @classmethod
    def from_dicts(cls, rows: Iterable[Dict[str, Any]]) -> "TrainingHistory":
        """Rebuild a history from :meth:`to_dicts` output.

        Raises:
            DataError: If a row lacks a field or holds a non-numeric value.
        """
        history = cls()
        for row in rows:
            try:
                record = EpochRecord(
                    epoch=int(row["epoch"]),
                    train_loss=float(row["train_loss"]),
                    train_accuracy=float(row["train_accuracy"]),
                    val_loss=float(row["val_loss"]),
                    val_accuracy=float(row["val_accuracy"]),
                )
            except (KeyError, TypeError, ValueError) as e:
                raise DataError(f"Malformed history row {row!r}: {e}") from e
            history.add(record)
        return history
