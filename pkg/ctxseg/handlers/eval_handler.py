import logging
from pathlib import Path
from typing import List, Optional, Union

from ..checkpoint import Checkpoint
from ..data.dataset import load_samples
from ..data.synthetic import SegSample
from ..errors import DataError
from ..metrics import ConfusionMatrix, MetricsLog
from ..network import SegmentationModel
from .handler import Handler, evaluate_samples, restore_model

logger = logging.getLogger(__name__)

# Epoch column value of rows written by standalone evaluation.
STANDALONE_EPOCH = -1


class EvalHandler(Handler):
    def __init__(self, checkpoint: Checkpoint, prettify: bool = False) -> None:
        super().__init__(checkpoint.config, prettify)
        self.checkpoint = checkpoint
        self.model: SegmentationModel = restore_model(checkpoint)

    def handle(
        self,
        split: str,
        metrics_path: Optional[Union[str, Path]] = None,
        samples: Optional[List[SegSample]] = None,
    ) -> ConfusionMatrix:
        config = self.config
        samples = load_samples(config, split) if samples is None else samples
        if not samples:
            raise DataError(f"split {split!r} is empty")
        cm = evaluate_samples(self.model, samples, config.workers)
        exclude = config.exclude_absent_classes
        if metrics_path is not None:
            MetricsLog(metrics_path, config.num_classes).write(STANDALONE_EPOCH, split, cm, exclude)

        summary = [
            {
                "split": split,
                "miou": cm.miou(exclude),
                "pix_acc": cm.pixel_accuracy(),
                "final_score": cm.final_score(exclude),
            }
        ]
        self.printer.static_print(self.metric_rows(cm), ("class", "iou"), title="Per-class IoU")
        self.printer.static_print(summary, ("split", "miou", "pix_acc", "final_score"))
        return cm
