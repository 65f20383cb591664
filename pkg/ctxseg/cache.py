import json
from hashlib import md5
from pathlib import Path
from typing import Any, Callable, List, no_type_check

import numpy as np
from pydantic import BaseModel

from .data.synthetic import SegSample


def _jsonable(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump()
    raise TypeError(f"cannot use {type(value).__name__} as a cache key")


class Cache:
    """
    Decorator class that memoizes dataset generation on disk.
    """

    def __init__(self, length: int, cache_path: Path) -> None:
        """
        Initialize the Cache decorator.

        :param length: Integer, maximum number of cached datasets to keep.
        """
        self.length = length
        self.cache_path = cache_path
        self.cache_path.mkdir(parents=True, exist_ok=True)

    def key(self, *args: Any, **kwargs: Any) -> str:
        payload = json.dumps((args, kwargs), default=_jsonable, sort_keys=True)
        return md5(payload.encode("utf-8")).hexdigest()

    def __call__(self, func: Callable[..., List[SegSample]]) -> Callable[..., List[SegSample]]:
        """
        The Cache decorator.

        :param func: Function returning a list of samples.
        :return: Wrapped function, accepting an extra ``caching`` keyword.
        """

        def wrapper(*args: Any, **kwargs: Any) -> List[SegSample]:
            caching = kwargs.pop("caching", True)
            file = self.cache_path / f"{self.key(*args, **kwargs)}.npz"
            if caching and file.exists():
                return self._load(file)
            samples = func(*args, **kwargs)
            if caching:
                self._store(file, samples)
                self._delete_oldest_files(self.length)  # type: ignore
            return samples

        return wrapper

    @staticmethod
    def _store(file: Path, samples: List[SegSample]) -> None:
        arrays = {}
        for i, sample in enumerate(samples):
            arrays[f"image_{i}"] = sample.image
            arrays[f"labels_{i}"] = sample.labels
        with open(file, "wb") as handle:
            np.savez_compressed(handle, **arrays)

    @staticmethod
    def _load(file: Path) -> List[SegSample]:
        with np.load(file) as archive:
            count = len(archive.files) // 2
            return [
                SegSample(archive[f"image_{i}"], archive[f"labels_{i}"]) for i in range(count)
            ]

    @no_type_check
    def _delete_oldest_files(self, max_files: int) -> None:
        """
        Delete the oldest cached datasets beyond ``max_files``.

        :param max_files: Integer, the maximum number of files to keep.
        """
        files = sorted(self.cache_path.glob("*.npz"), key=lambda f: f.stat().st_mtime)
        if len(files) > max_files:
            for file in files[: len(files) - max_files]:
                file.unlink()
