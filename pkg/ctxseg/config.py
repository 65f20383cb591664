import hashlib
import json
import os
from pathlib import Path
from tempfile import gettempdir
from typing import Any, Dict, List, Literal, Optional, Tuple

from click import UsageError
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

CONFIG_FOLDER = os.path.expanduser("~/.config")
CTXSEG_CONFIG_FOLDER = Path(
    os.getenv("CTXSEG_CONFIG_FOLDER", str(Path(CONFIG_FOLDER) / "ctxseg"))
)
CTXSEG_CONFIG_PATH = CTXSEG_CONFIG_FOLDER / ".ctxsegrc"
PROFILE_STORAGE_PATH = CTXSEG_CONFIG_FOLDER / "profiles"
DATASET_CACHE_PATH = Path(gettempdir()) / "ctxseg_datasets"
CHECKPOINT_PATH = Path("checkpoints")

DEFAULT_CONFIG = {
    "DATASET_CACHE_PATH": os.getenv("DATASET_CACHE_PATH", str(DATASET_CACHE_PATH)),
    "DATASET_CACHE_LENGTH": int(os.getenv("DATASET_CACHE_LENGTH", "16")),
    "CHECKPOINT_PATH": os.getenv("CHECKPOINT_PATH", str(CHECKPOINT_PATH)),
    "PROFILE_STORAGE_PATH": os.getenv(
        "PROFILE_STORAGE_PATH", str(PROFILE_STORAGE_PATH)
    ),
    "DEFAULT_COLOR": os.getenv("DEFAULT_COLOR", "cyan"),
    "LOG_LEVEL": os.getenv("LOG_LEVEL", "INFO"),
    "PRETTIFY_OUTPUT": os.getenv("PRETTIFY_OUTPUT", "true"),
    "WORKERS": int(os.getenv("WORKERS", "1")),
}


class Config(dict):  # type: ignore
    def __init__(self, config_path: Path, **defaults: Any):
        self.config_path = config_path

        if self._exists:
            self._read()
            has_new_config = False
            for key, value in defaults.items():
                if key not in self:
                    has_new_config = True
                    self[key] = value
            if has_new_config:
                self._write()
        else:
            config_path.parent.mkdir(parents=True, exist_ok=True)
            super().__init__(**defaults)
            self._write()

    @property
    def _exists(self) -> bool:
        return self.config_path.exists()

    def _write(self) -> None:
        with open(self.config_path, "w", encoding="utf-8") as file:
            string_config = ""
            for key, value in self.items():
                string_config += f"{key}={value}\n"
            file.write(string_config)

    def _read(self) -> None:
        with open(self.config_path, "r", encoding="utf-8") as file:
            for line in file:
                if line.strip() and not line.startswith("#"):
                    key, value = line.strip().split("=", 1)
                    self[key] = value

    def get(self, key: str) -> str:  # type: ignore
        # Prioritize environment variables over config file.
        value = os.getenv(key) or super().get(key)
        if not value:
            raise UsageError(f"Missing config key: {key}")
        return str(value)


cfg = Config(CTXSEG_CONFIG_PATH, **DEFAULT_CONFIG)

# Fields that may change between a run and its resumption.
RESUME_EXEMPT_FIELDS = frozenset(
    {"epochs", "max_iter", "checkpoint_dir", "checkpoint_every", "metrics_path", "workers"}
)


class TrainConfig(BaseModel):
    """
    Every experiment hyperparameter. The JSON config file mirrors it
    field for field; ``lambda`` is accepted for ``lam``.
    """

    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    # Optimization.
    lr_base: float = Field(1e-2, gt=0)
    momentum: float = Field(0.99, ge=0, lt=1)
    weight_decay: float = Field(1e-4, ge=0)
    power: float = Field(0.9, gt=0)
    max_iter: Optional[int] = Field(None, ge=1)
    batch: int = Field(1, ge=1)
    epochs: int = Field(20, ge=1)
    bn_momentum: float = Field(0.1, gt=0, le=1)

    # Objective.
    lam: float = Field(0.1, ge=0, alias="lambda")
    ohem: bool = True
    ohem_threshold: float = Field(0.7, gt=0, le=1)
    ohem_min_kept: float = Field(0.25, ge=0, le=1)

    # Architecture.
    num_classes: int = Field(4, ge=2)
    cardinality: int = Field(3, ge=1)
    long_kernel: int = Field(5, ge=1)
    widths: Tuple[int, int, int, int] = (16, 32, 64, 128)
    stem_width: int = Field(8, ge=1)
    blocks_per_stage: int = Field(2, ge=1)
    attention_reduction: int = Field(4, ge=1)
    global_kernel_policy: Literal["strict", "resample"] = "resample"
    use_ccpb: bool = True
    use_bcib: bool = True
    use_mcfb: bool = True

    # Augmentation.
    crop: int = Field(64, ge=32)
    scale_range: Tuple[float, float] = (0.5, 2.0)
    aspect_range: Tuple[float, float] = (0.7, 1.5)
    random_scale: bool = True
    random_aspect: bool = True
    hflip: bool = True
    vflip: bool = False

    # Data.
    dataset_dir: Optional[str] = None
    train_split: str = "train"
    val_split: str = "val"
    synthetic_train: int = Field(10, ge=1)
    synthetic_val: int = Field(4, ge=0)
    canvas: int = Field(64, ge=32)
    shapes_min: int = Field(1, ge=0)
    shapes_max: int = Field(3, ge=0)
    color_jitter: float = Field(0.08, ge=0)

    # Bookkeeping.
    seed: int = 0
    data_seed: int = 0
    workers: int = Field(default_factory=lambda: int(cfg.get("WORKERS")), ge=1)
    exclude_absent_classes: bool = True
    checkpoint_dir: str = Field(default_factory=lambda: cfg.get("CHECKPOINT_PATH"))
    checkpoint_every: int = Field(5, ge=1)
    metrics_path: str = "metrics.csv"

    @field_validator("widths")
    @classmethod
    def _non_decreasing(cls, widths: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(w < 1 for w in widths):
            raise ValueError("stage widths must be positive")
        if any(a > b for a, b in zip(widths, widths[1:])):
            raise ValueError(f"stage widths must be non-decreasing, got {widths}")
        return widths

    @field_validator("scale_range", "aspect_range")
    @classmethod
    def _ordered_range(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if not 0 < value[0] <= value[1]:
            raise ValueError(f"range must satisfy 0 < low <= high, got {value}")
        return value

    @model_validator(mode="after")
    def _check_flags(self) -> "TrainConfig":
        if self.use_bcib and not self.use_ccpb:
            raise ValueError("use_bcib requires use_ccpb")
        if self.use_mcfb and not self.use_bcib:
            raise ValueError("use_mcfb requires use_bcib")
        if self.shapes_min > self.shapes_max:
            raise ValueError("shapes_min must not exceed shapes_max")
        return self

    @classmethod
    def from_sources(
        cls,
        path: Optional[Path] = None,
        overrides: Optional[Dict[str, Any]] = None,
    ) -> "TrainConfig":
        """
        Layers profile overrides and the JSON config file over the defaults.

        :param path: Optional JSON config file, unknown keys are rejected.
        :param overrides: Profile values, applied before the file.
        """
        values: Dict[str, Any] = dict(overrides or {})
        if path is not None:
            values.update(json.loads(Path(path).read_text(encoding="utf-8")))
        return cls.model_validate(values)

    def to_json(self) -> str:
        return json.dumps(self.model_dump(by_alias=True), indent=2, sort_keys=True)

    def with_updates(self, **changes: Any) -> "TrainConfig":
        values = self.model_dump()
        values.update(changes)
        return TrainConfig.model_validate(values)

    def resume_view(self) -> Dict[str, Any]:
        values = self.model_dump(by_alias=True)
        return {k: v for k, v in values.items() if k not in RESUME_EXEMPT_FIELDS}

    def config_hash(self) -> str:
        canonical = json.dumps(self.resume_view(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def diff(self, other: "TrainConfig") -> List[str]:
        mine, theirs = self.resume_view(), other.resume_view()
        return [
            f"{key}: {theirs[key]!r} -> {mine[key]!r}"
            for key in sorted(mine)
            if mine[key] != theirs.get(key)
        ]
