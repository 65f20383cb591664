import csv
import math
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .errors import ContractError, ShapeError, UndefinedMetricError
from .loss import IGNORE_LABEL


class ConfusionMatrix:
    """Rows are ground truth, columns are predictions."""

    def __init__(self, num_classes: int) -> None:
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        self.ignored = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accumulate(self, prediction: np.ndarray, labels: np.ndarray) -> "ConfusionMatrix":
        if prediction.shape != labels.shape:
            raise ShapeError(
                f"prediction {prediction.shape} and labels {labels.shape} differ", dim="hw"
            )
        if prediction.size and (prediction.min() < 0 or prediction.max() >= self.num_classes):
            raise ContractError(
                f"prediction values must lie in [0, {self.num_classes}), "
                f"got [{prediction.min()}, {prediction.max()}]"
            )
        valid = labels != IGNORE_LABEL
        self.ignored += int((~valid).sum())
        gt = labels[valid].astype(np.int64)
        pred = prediction[valid].astype(np.int64)
        self.counts += np.bincount(
            gt * self.num_classes + pred, minlength=self.num_classes**2
        ).reshape(self.num_classes, self.num_classes)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ShapeError(
                f"cannot merge {other.num_classes}-class matrix into {self.num_classes}-class",
                dim="classes",
            )
        merged = ConfusionMatrix(self.num_classes)
        merged.counts = self.counts + other.counts
        merged.ignored = self.ignored + other.ignored
        return merged

    def _require_pixels(self) -> None:
        if self.total == 0:
            raise UndefinedMetricError("metrics are undefined for an empty confusion matrix")

    def per_class_iou(self) -> np.ndarray:
        """IoU per class, ``nan`` where the class is in neither labels nor predictions."""
        self._require_pixels()
        diag = np.diag(self.counts).astype(np.float64)
        union = self.counts.sum(axis=0) + self.counts.sum(axis=1) - diag
        iou = np.full(self.num_classes, np.nan)
        present = union > 0
        iou[present] = diag[present] / union[present]
        return iou

    def miou(self, exclude_absent: bool = True) -> float:
        iou = self.per_class_iou()
        if exclude_absent:
            return float(np.nanmean(iou))
        return float(np.nan_to_num(iou, nan=0.0).mean())

    def pixel_accuracy(self) -> float:
        self._require_pixels()
        return float(np.trace(self.counts)) / self.total

    def final_score(self, exclude_absent: bool = True) -> float:
        return (self.pixel_accuracy() + self.miou(exclude_absent)) / 2.0


def accumulate(
    cm: ConfusionMatrix, prediction: np.ndarray, labels: np.ndarray
) -> ConfusionMatrix:
    return cm.accumulate(prediction, labels)


def miou(cm: ConfusionMatrix, exclude_absent: bool = True) -> float:
    return cm.miou(exclude_absent)


def pixel_accuracy(cm: ConfusionMatrix) -> float:
    return cm.pixel_accuracy()


def final_score(cm: ConfusionMatrix, exclude_absent: bool = True) -> float:
    """Plain mean of pixel accuracy and mIoU."""
    return cm.final_score(exclude_absent)


def _format(value: float) -> str:
    return "nan" if math.isnan(value) else "%.6f" % value


class MetricsLog:
    """
    CSV of epoch, split, one IoU column per class, miou,
    pix_acc, final_score.
    """

    def __init__(self, path: Union[str, Path], num_classes: int) -> None:
        self.path = Path(path)
        self.num_classes = num_classes

    @property
    def header(self) -> List[str]:
        return (
            ["epoch", "split"]
            + [f"iou_{k}" for k in range(self.num_classes)]
            + ["miou", "pix_acc", "final_score"]
        )

    def row(
        self, epoch: int, split: str, cm: ConfusionMatrix, exclude_absent: bool = True
    ) -> List[str]:
        iou = cm.per_class_iou()
        return (
            [str(epoch), split]
            + [_format(float(v)) for v in iou]
            + [
                _format(cm.miou(exclude_absent)),
                _format(cm.pixel_accuracy()),
                _format(cm.final_score(exclude_absent)),
            ]
        )

    def reset(self) -> None:
        """Starts the file over with just the header."""
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", newline="", encoding="utf-8") as file:
            csv.writer(file, lineterminator="\n").writerow(self.header)

    def write(
        self, epoch: int, split: str, cm: ConfusionMatrix, exclude_absent: bool = True
    ) -> None:
        new_file = not self.path.exists()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", newline="", encoding="utf-8") as file:
            writer = csv.writer(file, lineterminator="\n")
            if new_file:
                writer.writerow(self.header)
            writer.writerow(self.row(epoch, split, cm, exclude_absent))

    def read(self) -> List[dict]:
        with open(self.path, newline="", encoding="utf-8") as file:
            return list(csv.DictReader(file))


def summarize(values: Sequence[float]) -> Optional[float]:
    """Median of ``values`` or None when empty."""
    return float(np.median(values)) if len(values) else None
