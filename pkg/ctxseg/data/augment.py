import math
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..backbone import padded_extent
from ..config import TrainConfig
from ..loss import IGNORE_LABEL
from ..ops import resize_array
from .synthetic import SegSample


class AugmentConfig(BaseModel):
    """
    Random scaling (RS), aspect ratio (AR) and flipping (IF) can each be
    switched off; the crop always applies.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    crop: int = Field(64, ge=1)
    scale_range: Tuple[float, float] = (0.5, 2.0)
    aspect_range: Tuple[float, float] = (0.7, 1.5)
    random_scale: bool = True
    random_aspect: bool = True
    hflip: bool = True
    vflip: bool = False
    pad_to_multiple: bool = True

    @classmethod
    def from_train_config(cls, config: TrainConfig) -> "AugmentConfig":
        return cls(
            crop=config.crop,
            scale_range=config.scale_range,
            aspect_range=config.aspect_range,
            random_scale=config.random_scale,
            random_aspect=config.random_aspect,
            hflip=config.hflip,
            vflip=config.vflip,
        )


def nearest_indices(in_size: int, out_size: int) -> np.ndarray:
    src = np.floor((np.arange(out_size) + 0.5) * in_size / out_size).astype(np.int64)
    return np.clip(src, 0, in_size - 1)  # type: ignore


def resize_sample(sample: SegSample, height: int, width: int) -> SegSample:
    """Bilinear for the image, nearest neighbour for the labels."""
    if (height, width) == (sample.height, sample.width):
        return sample
    image = np.clip(resize_array(sample.image, height, width), 0.0, 1.0).astype(np.float32)
    rows = nearest_indices(sample.height, height)
    cols = nearest_indices(sample.width, width)
    labels = sample.labels[rows[:, None], cols[None, :]]
    return SegSample(image, labels)


def flip_horizontal(sample: SegSample) -> SegSample:
    return SegSample(sample.image[:, :, ::-1].copy(), sample.labels[:, ::-1].copy())


def flip_vertical(sample: SegSample) -> SegSample:
    return SegSample(sample.image[:, ::-1, :].copy(), sample.labels[::-1, :].copy())


def pad_sample(sample: SegSample, height: int, width: int) -> SegSample:
    """Pads bottom and right with a zero image and the ignore label."""
    pad_h, pad_w = max(0, height - sample.height), max(0, width - sample.width)
    if not pad_h and not pad_w:
        return sample
    image = np.pad(sample.image, ((0, 0), (0, pad_h), (0, pad_w)))
    labels = np.pad(sample.labels, ((0, pad_h), (0, pad_w)), constant_values=IGNORE_LABEL)
    return SegSample(image, labels)


def augment(sample: SegSample, cfg: AugmentConfig, rng: np.random.Generator) -> SegSample:
    """
    Random scale and aspect ratio, optional flips, then a random
    ``cfg.crop`` window (padding first when the sample is smaller).
    Crops that are not multiples of 32 are padded up to one.
    """
    scale = rng.uniform(*cfg.scale_range) if cfg.random_scale else 1.0
    aspect = rng.uniform(*cfg.aspect_range) if cfg.random_aspect else 1.0
    # aspect is the width / height stretch
    height = max(1, int(round(sample.height * scale / math.sqrt(aspect))))
    width = max(1, int(round(sample.width * scale * math.sqrt(aspect))))
    out = resize_sample(sample, height, width)

    if cfg.hflip and rng.random() < 0.5:
        out = flip_horizontal(out)
    if cfg.vflip and rng.random() < 0.5:
        out = flip_vertical(out)

    out = pad_sample(out, cfg.crop, cfg.crop)
    top = int(rng.integers(0, out.height - cfg.crop + 1))
    left = int(rng.integers(0, out.width - cfg.crop + 1))
    out = SegSample(
        out.image[:, top : top + cfg.crop, left : left + cfg.crop].copy(),
        out.labels[top : top + cfg.crop, left : left + cfg.crop].copy(),
    )
    if cfg.pad_to_multiple:
        size = padded_extent(cfg.crop)
        out = pad_sample(out, size, size)
    return out
