import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, List, Sequence, Tuple

import numpy as np

from ..backbone import padded_extent
from ..checkpoint import Checkpoint, load_checkpoint
from ..config import TrainConfig, cfg
from ..data.augment import pad_sample
from ..data.synthetic import SegSample
from ..metrics import ConfusionMatrix
from ..network import SegmentationModel
from ..printer import Printer, get_printer

logger = logging.getLogger(__name__)


def predict_sample(model: SegmentationModel, sample: SegSample) -> np.ndarray:
    """Label map of ``sample``, padded to the model's divisor and cropped back."""
    height, width = sample.height, sample.width
    padded = pad_sample(sample, padded_extent(height), padded_extent(width))
    return model.predict(padded.as_tensor())[0, :height, :width]


def evaluate_samples(
    model: SegmentationModel, samples: Sequence[SegSample], workers: int = 1
) -> ConfusionMatrix:
    """
    Streams ``samples`` through the frozen model; with several workers
    each one fills its own matrix and the matrices are merged.
    """
    num_classes = model.num_classes

    def _run(chunk: Sequence[SegSample]) -> ConfusionMatrix:
        cm = ConfusionMatrix(num_classes)
        for sample in chunk:
            cm.accumulate(predict_sample(model, sample), sample.labels)
        return cm

    if workers <= 1 or len(samples) <= 1:
        return _run(samples)
    chunks = [samples[i::workers] for i in range(workers)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        matrices = list(pool.map(_run, chunks))
    total = ConfusionMatrix(num_classes)
    for cm in matrices:
        total = total.merge(cm)
    return total


def restore_model(checkpoint: Checkpoint) -> SegmentationModel:
    model = SegmentationModel(checkpoint.config)
    checkpoint.restore(model.store)
    return model


class Handler:
    def __init__(self, config: TrainConfig, prettify: bool) -> None:
        self.config = config
        self.prettify = prettify
        self.color = cfg.get("DEFAULT_COLOR")

    @property
    def printer(self) -> Printer:
        return get_printer(self.prettify, self.color)

    @staticmethod
    def load(path: Any) -> Tuple[Checkpoint, SegmentationModel]:
        checkpoint = load_checkpoint(path)
        logger.info("loaded checkpoint %s (iteration %d)", path, checkpoint.iteration)
        return checkpoint, restore_model(checkpoint)

    def metric_rows(self, cm: ConfusionMatrix) -> List[dict]:
        iou = cm.per_class_iou()
        return [{"class": k, "iou": float(v)} for k, v in enumerate(iou)]

    def handle(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError
