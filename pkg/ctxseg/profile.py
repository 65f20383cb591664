import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional

import typer
from click import BadArgumentUsage

from .config import cfg
from .utils import option_callback

SYNTHETIC_PROFILE = {
    "num_classes": 4,
    "crop": 64,
    "batch": 1,
    "lr_base": 1e-2,
    "momentum": 0.9,
}
VOC_PROFILE = {"num_classes": 21, "crop": 480, "batch": 8, "lr_base": 1e-2}
CITYSCAPES_PROFILE = {"num_classes": 19, "crop": 769, "batch": 8, "lr_base": 1e-2}
ADE20K_PROFILE = {"num_classes": 150, "crop": 520, "batch": 8, "lr_base": 2e-2}


class DatasetProfile:
    storage: Path = Path(cfg.get("PROFILE_STORAGE_PATH"))

    def __init__(self, name: str, overrides: Optional[Dict[str, Any]] = None) -> None:
        self.storage.mkdir(parents=True, exist_ok=True)
        self.name = name
        self.overrides = dict(overrides or {})

    @classmethod
    def create_defaults(cls) -> None:
        cls.storage.parent.mkdir(parents=True, exist_ok=True)
        for default_profile in (
            DatasetProfile(DefaultProfiles.SYNTHETIC.value, SYNTHETIC_PROFILE),
            DatasetProfile(DefaultProfiles.VOC.value, VOC_PROFILE),
            DatasetProfile(DefaultProfiles.CITYSCAPES.value, CITYSCAPES_PROFILE),
            DatasetProfile(DefaultProfiles.ADE20K.value, ADE20K_PROFILE),
        ):
            if not default_profile._exists:
                default_profile._save()

    @classmethod
    def get(cls, name: str) -> "DatasetProfile":
        file_path = cls.storage / f"{name}.json"
        if not file_path.exists():
            raise BadArgumentUsage(f'Profile "{name}" not found.')
        return cls(**json.loads(file_path.read_text(encoding="utf-8")))

    @classmethod
    @option_callback
    def list(cls, _value: str) -> None:
        if not cls.storage.exists():
            return
        for path in sorted(cls.storage.glob("*.json"), key=lambda f: f.stat().st_mtime):
            typer.echo(path)

    @classmethod
    @option_callback
    def show(cls, name: str) -> None:
        typer.echo(json.dumps(cls.get(name).overrides, indent=2, sort_keys=True))

    @property
    def _exists(self) -> bool:
        return self._file_path.exists()

    @property
    def _file_path(self) -> Path:
        return self.storage / f"{self.name}.json"

    def _save(self) -> None:
        self._file_path.write_text(json.dumps(self.__dict__, indent=2), encoding="utf-8")


class DefaultProfiles(Enum):
    SYNTHETIC = "synthetic"
    VOC = "voc"
    CITYSCAPES = "cityscapes"
    ADE20K = "ade20k"


DatasetProfile.create_defaults()
