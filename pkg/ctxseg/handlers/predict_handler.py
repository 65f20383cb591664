import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from ..backbone import padded_extent
from ..checkpoint import Checkpoint
from ..data.raster import colorize, read_image, write_labels, write_raster
from ..tensor import Tensor
from .handler import Handler, restore_model

logger = logging.getLogger(__name__)


def reflect_pad(image: np.ndarray) -> Tuple[np.ndarray, int, int]:
    """Reflect-pads a (3, h, w) image up to multiples of 32."""
    height, width = image.shape[1:]
    pad_h, pad_w = padded_extent(height) - height, padded_extent(width) - width
    if pad_h or pad_w:
        logger.warning(
            "image %dx%d is not divisible by 32, reflect-padding to %dx%d and cropping the output",
            height, width, height + pad_h, width + pad_w,
        )
        image = np.pad(image, ((0, 0), (0, pad_h), (0, pad_w)), mode="reflect")
    return image, height, width


class PredictHandler(Handler):
    def __init__(self, checkpoint: Checkpoint, prettify: bool = False) -> None:
        super().__init__(checkpoint.config, prettify)
        self.model = restore_model(checkpoint)

    def predict(self, image: np.ndarray) -> np.ndarray:
        padded, height, width = reflect_pad(image)
        labels = self.model.predict(Tensor(padded[None].astype(np.float32)))
        return labels[0, :height, :width].astype(np.uint8)

    def handle(self, image_path: Union[str, Path], out_dir: Union[str, Path]) -> Tuple[Path, Path]:
        """
        Writes ``<stem>_color.ppm`` (palette-coded) and ``<stem>_labels.pgm``.
        """
        image_path, out_dir = Path(image_path), Path(out_dir)
        labels = self.predict(read_image(image_path))
        color = write_raster(out_dir / f"{image_path.stem}_color.ppm", colorize(labels))
        raw = write_labels(out_dir / f"{image_path.stem}_labels.pgm", labels)
        self.printer.static_print(
            [{"output": str(color)}, {"output": str(raw)}], ("output",), title="Predictions"
        )
        return color, raw
