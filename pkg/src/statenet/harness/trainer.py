"""Training loop for the tuned VGG-16 networks.

Workflow: ingest -> augment -> split -> build model (optionally loading base
weights) -> freeze -> RMSprop epochs. After every epoch both train and
validation splits are re-scored in eval mode (dropout off), a checkpoint is
written and the best epoch by validation accuracy is tracked.
"""

from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import structlog

from ..config import TrainingConfig
from ..errors import DataError, NumericError
from ..imgpipe import expand_manifest, write_manifest
from ..layers import l2_penalty, softmax_cross_entropy
from ..modelzoo import (
    ArchitectureSpec,
    WeightManifest,
    backward,
    forward,
    init_weights,
    load_weights_partial,
    param_count,
    save_checkpoint,
)
from ..optim import FreezePolicy, RMSprop, build_freeze_policy
from ..tensor import Tensor
from .data import PreparedDataset, build_model_arch, class_names, compute_threads, prepare_dataset, to_arrays
from .history import EpochRecord, TrainingHistory
from .reports import export_history

logger = structlog.get_logger()

ParameterSet = Dict[str, Tensor]


def batch_seed(seed: int, epoch: int, batch_index: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, batch_index]).generate_state(1)[0])


def score_arrays(
    arch: ArchitectureSpec, params: ParameterSet, x: Tensor, y: np.ndarray, batch_size: int
) -> Tuple[float, float]:
    """Eval-mode mean cross-entropy and accuracy over a whole split."""
    n = len(y)
    if n == 0:
        raise DataError("Cannot score an empty split")
    total_loss, correct = 0.0, 0
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        logits, _ = forward(arch, params, x[start:stop], "eval")
        loss, _ = softmax_cross_entropy(logits, y[start:stop])
        total_loss += loss * (stop - start)
        correct += int(np.sum(np.argmax(logits, axis=1) == y[start:stop]))
    return total_loss / n, correct / n


def training_loss_and_grads(
    arch: ArchitectureSpec,
    params: ParameterSet,
    x: Tensor,
    y: np.ndarray,
    seed: int,
    frozen: frozenset,
) -> Tuple[float, ParameterSet]:
    """Train-mode loss (cross-entropy plus any L2 term) and parameter gradients."""
    logits, cache = forward(arch, params, x, "train", seed=seed)
    loss, d_logits = softmax_cross_entropy(logits, y)
    grads = backward(arch, params, cache, d_logits, skip=frozen)
    if arch.l2 is not None and arch.l2.lam > 0:
        penalty, penalty_grads = l2_penalty(params, arch.l2.lam, arch.l2.scope)
        loss += penalty
        for name, g in penalty_grads.items():
            if name in grads:
                grads[name] = grads[name] + g
    return loss, grads


class TrainingRun:
    """One training run owning its model, optimizer and output directory."""

    def __init__(
        self,
        config: TrainingConfig,
        out_dir: Union[str, Path],
        base_weights: Optional[Union[str, Path]] = None,
    ):
        """Initialize the run.

        Args:
            config: Validated hyperparameters.
            out_dir: Directory receiving checkpoints, history and split files.
            base_weights: Optional weight manifest with pretrained base layers.
        """
        self.config = config
        self.out_dir = Path(out_dir)
        self.base_weights = Path(base_weights) if base_weights else None
        self.arch = build_model_arch(config)
        self.params: ParameterSet = {}
        self.policy = FreezePolicy(frozenset())
        self.optimizer: Optional[RMSprop] = None
        self.history = TrainingHistory()

    def run(self, data_root: Union[str, Path]) -> TrainingHistory:
        """Run every configured epoch and return the history.

        Raises:
            DataError: If the dataset is unreadable or a split is empty.
            NumericError: If the loss becomes NaN/Inf.
        """
        with compute_threads(self.config):
            return self._run(data_root)

    def _run(self, data_root: Union[str, Path]) -> TrainingHistory:
        logger.info(
            "Starting training run",
            arch=self.config.arch,
            epochs=self.config.epochs,
            batch_size=self.config.batch_size,
            lr=self.config.lr,
            out_dir=str(self.out_dir),
        )
        self.out_dir.mkdir(parents=True, exist_ok=True)

        logger.info("Step 1: Preparing dataset...")
        dataset = self._prepare(data_root)
        x_train, y_train = to_arrays(dataset.select("train"), self.config)
        x_val, y_val = to_arrays(dataset.select("val"), self.config)
        if len(y_train) == 0 or len(y_val) == 0:
            raise DataError(
                f"Empty split after splitting: train={len(y_train)} val={len(y_val)}"
            )

        logger.info("Step 2: Building model...")
        self._build_model()

        logger.info("Step 3: Training...")
        for epoch in range(1, self.config.epochs + 1):
            self._train_epoch(epoch, x_train, y_train)
            train_loss, train_acc = score_arrays(self.arch, self.params, x_train, y_train, self.config.batch_size)
            val_loss, val_acc = score_arrays(self.arch, self.params, x_val, y_val, self.config.batch_size)
            self.history.add(EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc))
            self._save_epoch(epoch)
            logger.info(
                "Epoch completed",
                epoch=epoch,
                train_loss=round(train_loss, 6),
                train_accuracy=round(train_acc, 4),
                val_loss=round(val_loss, 6),
                val_accuracy=round(val_acc, 4),
                best_epoch=self.history.best_epoch,
            )
            target = self.config.target_train_accuracy
            if target is not None and train_acc >= target:
                logger.info("Target train accuracy reached", epoch=epoch, train_accuracy=train_acc)
                break

        export_history(self.history, self.out_dir)
        logger.info("Training completed", best_epoch=self.history.best_epoch)
        return self.history

    def _prepare(self, data_root: Union[str, Path]) -> PreparedDataset:
        dataset = prepare_dataset(self.config, data_root)
        write_manifest(expand_manifest(dataset.records), self.out_dir / "manifest.tsv")
        dataset.plan.write(self.out_dir / "split.tsv")
        (self.out_dir / "config.txt").write_text(self.config.to_lines(), encoding="utf-8")
        if not dataset.select("test"):
            logger.warning("Test split is empty")
        return dataset

    def _build_model(self) -> None:
        self.params = init_weights(self.arch, self.config.seed)
        loaded = None
        if self.base_weights is not None:
            manifest = WeightManifest.load(self.base_weights)
            self.params, report = load_weights_partial(
                self.arch, manifest, self.params, self.config.load_policy
            )
            loaded = report.loaded
        elif self.config.freeze == "pretrained-frozen":
            logger.warning("No base weights given; pretrained-frozen freezes nothing")
            loaded = []

        self.policy = build_freeze_policy(
            self.arch, self.config.freeze, names=self.config.freeze_layers, loaded=loaded
        )
        self.arch = self.arch.with_frozen(self.policy.frozen_layer_names)
        self.optimizer = RMSprop(
            self.params,
            self.policy.trainable(self.params),
            lr=self.config.lr,
            rho=self.config.rho,
            epsilon=self.config.epsilon,
        )
        counts = param_count(self.arch)
        logger.info(
            "Model built",
            arch=self.arch.name,
            total_params=counts.total,
            trainable_params=sum(self.params[n].size for n in self.optimizer.state.trainable),
        )

    def _train_epoch(self, epoch: int, x: Tensor, y: np.ndarray) -> None:
        assert self.optimizer is not None
        order = np.random.default_rng([self.config.seed, epoch]).permutation(len(y))
        for batch_index, start in enumerate(range(0, len(y), self.config.batch_size)):
            idx = order[start : start + self.config.batch_size]
            loss, grads = training_loss_and_grads(
                self.arch,
                self.params,
                x[idx],
                y[idx],
                batch_seed(self.config.seed, epoch, batch_index),
                self.policy.frozen_layer_names,
            )
            if not np.isfinite(loss):
                raise NumericError(f"Loss became {loss} at epoch {epoch}, batch {batch_index}", layer="loss")
            self.params = self.optimizer.step(self.params, grads)

    def _save_epoch(self, epoch: int) -> None:
        assert self.optimizer is not None
        record = self.history.records[-1]
        metadata = {
            "arch": self.arch.name,
            "config": self.config.model_dump(mode="json"),
            "class_names": class_names(),
            "frozen": sorted(self.policy.frozen_layer_names),
            "val_accuracy": record.val_accuracy,
            "best_epoch": self.history.best_epoch,
        }
        args = (self.params, self.optimizer.state, epoch, self.history.to_dicts(), metadata)
        save_checkpoint(self.out_dir / "last.ckpt", *args)
        if self.history.best_epoch == epoch:
            save_checkpoint(self.out_dir / "best.ckpt", *args)
        if self.config.keep_epoch_checkpoints:
            save_checkpoint(self.out_dir / f"epoch_{epoch:03d}.ckpt", *args)


def train(
    config: TrainingConfig,
    data_root: Union[str, Path],
    out_dir: Union[str, Path],
    base_weights: Optional[Union[str, Path]] = None,
) -> TrainingHistory:
    """Train a model and write its run directory."""
    return TrainingRun(config, out_dir, base_weights).run(data_root)
