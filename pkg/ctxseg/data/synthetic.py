import colorsys
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import DataError, InvalidArgumentError, ShapeError
from ..loss import IGNORE_LABEL
from ..tensor import Tensor

PRIMITIVES = ("rectangle", "disk", "triangle", "ring")
BACKGROUND = (0.12, 0.12, 0.12)


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    num_classes: int = Field(4, ge=2, le=255)
    shapes_min: int = Field(1, ge=0)
    shapes_max: int = Field(3, ge=0)
    canvas: int = Field(64, ge=32)
    color_jitter: float = Field(0.08, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_range(self) -> "SyntheticSpec":
        if self.shapes_min > self.shapes_max:
            raise ValueError("shapes_min must not exceed shapes_max")
        return self


@dataclass
class SegSample:
    """
    :param image: (3, h, w) float32 in [0, 1].
    :param labels: (h, w) uint8, values in [0, L) or 255.
    """

    image: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ShapeError(f"image must be (3, h, w), got {self.image.shape}", dim="c")
        if self.image.shape[1:] != self.labels.shape:
            raise ShapeError(
                f"image {self.image.shape[1:]} and labels {self.labels.shape} differ", dim="hw"
            )

    def check_labelled(self) -> "SegSample":
        if not (self.labels != IGNORE_LABEL).any():
            raise DataError("sample has no labelled pixel")
        return self

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    def as_tensor(self) -> Tensor:
        return Tensor(self.image[None].astype(np.float32))


def class_color(k: int, num_classes: int) -> Tuple[float, float, float]:
    if k == 0:
        return BACKGROUND
    hue = (k - 1) / max(1, num_classes - 1)
    return colorsys.hsv_to_rgb(hue, 0.75, 0.9)


def _draw(draw: ImageDraw.ImageDraw, kind: str, box: Tuple[int, int, int, int], fill: object) -> None:
    x0, y0, x1, y1 = box
    if kind == "rectangle":
        draw.rectangle(box, fill=fill)
    elif kind == "disk":
        draw.ellipse(box, fill=fill)
    elif kind == "triangle":
        draw.polygon([(x0, y1), (x1, y1), ((x0 + x1) // 2, y0)], fill=fill)
    else:
        width = max(2, (x1 - x0) // 5)
        draw.ellipse(box, outline=fill, width=width)


def generate_sample(spec: SyntheticSpec, index: int) -> SegSample:
    """The ``index``-th sample of ``spec``; depends only on (seed, index)."""
    rng = np.random.default_rng([spec.seed, index])
    size = spec.canvas
    canvas = Image.new("RGB", (size, size), tuple(int(255 * c) for c in BACKGROUND))
    labels = Image.new("L", (size, size), 0)
    paint, trace = ImageDraw.Draw(canvas), ImageDraw.Draw(labels)

    count = int(rng.integers(spec.shapes_min, spec.shapes_max + 1))
    for _ in range(count):
        k = int(rng.integers(1, spec.num_classes))
        extent = rng.integers(size // 6, size // 2 + 1, size=2)
        x0 = int(rng.integers(0, size - extent[0] + 1))
        y0 = int(rng.integers(0, size - extent[1] + 1))
        box = (x0, y0, x0 + int(extent[0]) - 1, y0 + int(extent[1]) - 1)
        base = np.asarray(class_color(k, spec.num_classes))
        color = np.clip(base + rng.uniform(-spec.color_jitter, spec.color_jitter, 3), 0, 1)
        kind = PRIMITIVES[(k - 1) % len(PRIMITIVES)]
        _draw(paint, kind, box, tuple(int(round(255 * c)) for c in color))
        _draw(trace, kind, box, k)

    image = np.asarray(canvas, dtype=np.float32).transpose(2, 0, 1) / 255.0
    noise = rng.normal(0.0, spec.color_jitter / 2, image.shape) if spec.color_jitter else 0.0
    image = np.clip(image + noise, 0.0, 1.0).astype(np.float32)
    return SegSample(image, np.asarray(labels, dtype=np.uint8).copy()).check_labelled()


def generate_synthetic(spec: SyntheticSpec, count: int) -> List[SegSample]:
    """
    Class k is always the same primitive kind in a class-specific base
    color; labels are drawn with the same primitives as the image.
    """
    if count < 1:
        raise InvalidArgumentError(f"count must be >= 1, got {count}")
    return [generate_sample(spec, index) for index in range(count)]
