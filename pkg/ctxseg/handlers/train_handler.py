import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union

import numpy as np

from ..checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from ..config import TrainConfig
from ..data.augment import AugmentConfig
from ..data.dataset import load_samples
from ..data.loader import SampleLoader, epoch_rng
from ..data.synthetic import SegSample
from ..errors import ConfigurationError, DataError
from ..layers import Mode
from ..loss import IGNORE_LABEL, OhemConfig, compute_loss
from ..metrics import ConfusionMatrix, MetricsLog
from ..network import SegmentationModel
from ..optim import poly_lr, sgd_step
from ..tensor import Tape, backward
from .handler import Handler, evaluate_samples

logger = logging.getLogger(__name__)

PROGRESS_COLUMNS = ("iteration", "epoch", "lr", "loss", "master", "accuracy")


@dataclass
class TrainResult:
    model: SegmentationModel
    iteration: int
    losses: List[float] = field(default_factory=list)
    accuracies: List[float] = field(default_factory=list)
    validation: List[ConfusionMatrix] = field(default_factory=list)
    checkpoint: Optional[Path] = None


def batch_accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    valid = labels != IGNORE_LABEL
    if not valid.any():
        return float("nan")
    return float((np.argmax(logits, axis=1) == labels)[valid].mean())


class TrainHandler(Handler):
    """
    SGD with poly learning-rate decay over epochs * ceil(N / batch)
    iterations (or ``max_iter``), validating after every epoch.
    """

    def __init__(
        self,
        config: TrainConfig,
        prettify: bool = False,
        write_outputs: bool = True,
        train_samples: Optional[List[SegSample]] = None,
        val_samples: Optional[List[SegSample]] = None,
    ) -> None:
        super().__init__(config, prettify)
        self.write_outputs = write_outputs
        self.train_samples = train_samples
        self.val_samples = val_samples
        self.result: Optional[TrainResult] = None

    def _samples(self) -> None:
        if self.train_samples is None:
            self.train_samples = load_samples(self.config, self.config.train_split)
        if self.val_samples is None:
            self.val_samples = load_samples(self.config, self.config.val_split)
        if not self.train_samples:
            raise DataError(f"split {self.config.train_split!r} is empty")

    def checkpoint_path(self, iteration: int) -> Path:
        return Path(self.config.checkpoint_dir) / f"ckpt_{iteration:06d}.bcan"

    def _resume(self, model: SegmentationModel, path: Union[str, Path]) -> Checkpoint:
        checkpoint = load_checkpoint(path)
        if checkpoint.config_hash != self.config.config_hash():
            changes = "; ".join(self.config.diff(checkpoint.config)) or "unknown fields"
            raise ConfigurationError(
                f"refusing to resume from {path}: configuration changed ({changes})"
            )
        checkpoint.restore(model.store)
        logger.info("resuming from %s at iteration %d", path, checkpoint.iteration)
        return checkpoint

    def _save(self, model: SegmentationModel, iteration: int, steps_per_epoch: int) -> Path:
        rng = epoch_rng(self.config.seed, iteration // steps_per_epoch)
        checkpoint = Checkpoint.capture(self.config, model.store, iteration, rng)
        return save_checkpoint(self.checkpoint_path(iteration), checkpoint)

    def steps(self, resume: Optional[Union[str, Path]] = None) -> Iterator[Dict[str, float]]:
        """Runs training, yielding one progress row per iteration."""
        config = self.config
        self._samples()
        assert self.train_samples is not None and self.val_samples is not None
        model = SegmentationModel(config)
        loader = SampleLoader(
            self.train_samples,
            AugmentConfig.from_train_config(config),
            batch=config.batch,
            seed=config.seed,
            workers=config.workers,
        )
        steps_per_epoch = len(loader)
        max_iter = config.max_iter or config.epochs * steps_per_epoch
        epochs = -(-max_iter // steps_per_epoch)
        ohem = OhemConfig(
            enabled=config.ohem, threshold=config.ohem_threshold, min_kept=config.ohem_min_kept
        )
        if config.batch < 2:
            logger.warning(
                "batch size %d: batch-norm statistics come from a single image", config.batch
            )

        iteration = 0
        shuffle: Optional[np.random.Generator] = None
        metrics = MetricsLog(config.metrics_path, config.num_classes)
        if resume is not None:
            checkpoint = self._resume(model, resume)
            iteration = checkpoint.iteration
            shuffle = checkpoint.generator()
        elif self.write_outputs:
            metrics.reset()
        result = self.result = TrainResult(model, iteration)

        for epoch in range(iteration // steps_per_epoch, epochs):
            skip = iteration - epoch * steps_per_epoch
            for step, batch in enumerate(loader.epoch(epoch, shuffle)):
                if step < skip:
                    continue
                if iteration >= max_iter:
                    break
                lr = poly_lr(config.lr_base, iteration, max_iter, config.power)
                model.store.zero_grad()
                with Tape() as tape:
                    logits, aux_logits = model.forward(batch.images, Mode.TRAIN)
                    report = compute_loss(logits, aux_logits, batch.labels, config.lam, ohem)
                backward(report.total, tape)
                sgd_step(model.store, lr, config.momentum, config.weight_decay)
                iteration += 1
                accuracy = batch_accuracy(logits.data, batch.labels)
                result.iteration = iteration
                result.losses.append(report.value)
                result.accuracies.append(accuracy)
                yield {
                    "iteration": iteration,
                    "epoch": epoch,
                    "lr": lr,
                    "loss": report.value,
                    "master": report.master,
                    "accuracy": accuracy,
                }

            if self.val_samples:
                cm = evaluate_samples(model, self.val_samples, config.workers)
                result.validation.append(cm)
                if self.write_outputs:
                    metrics.write(epoch, config.val_split, cm, config.exclude_absent_classes)
                logger.info(
                    "epoch %d: val mIoU %.4f pixAcc %.4f",
                    epoch, cm.miou(config.exclude_absent_classes), cm.pixel_accuracy(),
                )
            last = iteration >= max_iter or epoch == epochs - 1
            if self.write_outputs and ((epoch + 1) % config.checkpoint_every == 0 or last):
                result.checkpoint = self._save(model, iteration, steps_per_epoch)
            shuffle = None
            if iteration >= max_iter:
                break

    def handle(self, resume: Optional[Union[str, Path]] = None, live: bool = True) -> TrainResult:
        logger.info("training with configuration:\n%s", self.config.to_json())
        self.printer(self.steps(resume), PROGRESS_COLUMNS, live)
        assert self.result is not None
        return self.result
