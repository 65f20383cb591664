import logging
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..cache import Cache
from ..config import TrainConfig, cfg
from ..errors import DataError
from .raster import read_image, read_labels, write_image, write_labels
from .synthetic import SegSample, SyntheticSpec, generate_synthetic

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
PathLike = Union[str, Path]

dataset_cache = Cache(int(cfg.get("DATASET_CACHE_LENGTH")), Path(cfg.get("DATASET_CACHE_PATH")))


class Manifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    num_classes: int = Field(ge=2)
    splits: Dict[str, List[int]]


def image_path(root: Path, index: int) -> Path:
    return root / "images" / f"{index:04d}.ppm"


def label_path(root: Path, index: int) -> Path:
    return root / "labels" / f"{index:04d}.pgm"


def save_dataset(
    root: PathLike, splits: Mapping[str, Sequence[SegSample]], num_classes: int
) -> Manifest:
    """
    Writes every split with globally unique sample numbers as
    ``images/NNNN.ppm``, ``labels/NNNN.pgm`` and ``manifest.json``.
    """
    root = Path(root)
    manifest = Manifest(num_classes=num_classes, splits={})
    index = 0
    for split, samples in splits.items():
        members = manifest.splits.setdefault(split, [])
        for sample in samples:
            write_image(image_path(root, index), sample.image)
            write_labels(label_path(root, index), sample.labels)
            members.append(index)
            index += 1
    (root / MANIFEST).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.info("wrote %d samples to %s", index, root)
    return manifest


def load_manifest(root: PathLike) -> Manifest:
    path = Path(root) / MANIFEST
    if not path.exists():
        raise DataError(f"no {MANIFEST} in {root}")
    try:
        return Manifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as error:
        raise DataError(f"invalid manifest {path}: {error}") from error


def load_split(root: PathLike, split: str) -> List[SegSample]:
    root = Path(root)
    manifest = load_manifest(root)
    if split not in manifest.splits:
        raise DataError(f"split {split!r} not in manifest, have: {', '.join(manifest.splits)}")
    return [
        SegSample(
            read_image(image_path(root, index)),
            read_labels(label_path(root, index), manifest.num_classes),
        ).check_labelled()
        for index in manifest.splits[split]
    ]


@dataset_cache
def cached_synthetic(spec: SyntheticSpec, count: int) -> List[SegSample]:
    return generate_synthetic(spec, count)


def synthetic_spec(config: TrainConfig, split: str) -> SyntheticSpec:
    # Validation images come from a disjoint seed stream.
    offset = 0 if split == config.train_split else 1_000_003
    return SyntheticSpec(
        num_classes=config.num_classes,
        shapes_min=config.shapes_min,
        shapes_max=config.shapes_max,
        canvas=config.canvas,
        color_jitter=config.color_jitter,
        seed=config.data_seed + offset,
    )


def load_samples(config: TrainConfig, split: str, caching: bool = True) -> List[SegSample]:
    """The split from ``config.dataset_dir`` or, without one, a synthetic set."""
    if config.dataset_dir:
        return load_split(config.dataset_dir, split)
    count = config.synthetic_train if split == config.train_split else config.synthetic_val
    if count < 1:
        return []
    return cached_synthetic(synthetic_spec(config, split), count, caching=caching)
