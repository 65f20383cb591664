import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Dict, Tuple, Union

import numpy as np
from pydantic import ValidationError

from .config import TrainConfig
from .errors import CheckpointError
from .layers import ParamStore

logger = logging.getLogger(__name__)

MAGIC = b"BCAN"
VERSION = 1


@dataclass
class Checkpoint:
    config: TrainConfig
    params: Dict[str, np.ndarray]
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)
    iteration: int = 0
    rng_state: Dict[str, Any] = field(default_factory=dict)
    config_hash: str = ""

    @classmethod
    def capture(
        cls,
        config: TrainConfig,
        store: ParamStore,
        iteration: int,
        rng: np.random.Generator,
    ) -> "Checkpoint":
        return cls(
            config=config,
            params={name: t.data.astype(np.float32) for name, t in store.items()},
            buffers={name: b.astype(np.float64) for name, b in store.buffers.items()},
            iteration=iteration,
            rng_state=rng.bit_generator.state,
            config_hash=config.config_hash(),
        )

    def restore(self, store: ParamStore) -> None:
        """Copies parameters and buffers into an initialized ``store``."""
        missing = [name for name in store if name not in self.params]
        if missing:
            raise CheckpointError(f"checkpoint lacks parameters: {', '.join(missing[:5])}")
        for name, tensor in store.items():
            array = self.params[name]
            if array.shape != tensor.shape:
                raise CheckpointError(
                    f"parameter {name!r} has shape {array.shape}, model expects {tensor.shape}"
                )
            tensor.data = array.astype(tensor.dtype)
            tensor.grad = None
        for name, array in self.buffers.items():
            if name in store.buffers and store.buffers[name].shape == array.shape:
                store.buffers[name][...] = array
            else:
                store.buffers[name] = array.copy()

    def generator(self) -> np.random.Generator:
        rng = np.random.default_rng()
        if self.rng_state:
            rng.bit_generator.state = self.rng_state
        return rng


def _write_bytes(file: BinaryIO, payload: bytes) -> None:
    file.write(struct.pack("<I", len(payload)))
    file.write(payload)


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> Path:
    """
    Little-endian layout:

        b"BCAN"  u32 version
        u32 length + UTF-8 JSON training configuration
        u32 count, then per parameter:
            u32 name length + name, 4 x u32 extents, float32 values
        u32 count, then per buffer (running statistics, momentum velocities):
            u32 name length + name, u32 rank, rank x u32 extents, float64 values
        u64 iteration
        u32 length + JSON random generator state
        u32 length + ASCII configuration hash
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as file:
        file.write(MAGIC)
        file.write(struct.pack("<I", VERSION))
        _write_bytes(file, checkpoint.config.to_json().encode("utf-8"))

        file.write(struct.pack("<I", len(checkpoint.params)))
        for name, array in checkpoint.params.items():
            if array.ndim != 4:
                raise CheckpointError(f"parameter {name!r} must be 4-D, got shape {array.shape}")
            _write_bytes(file, name.encode("utf-8"))
            file.write(struct.pack("<4I", *array.shape))
            file.write(np.ascontiguousarray(array, dtype="<f4").tobytes())

        file.write(struct.pack("<I", len(checkpoint.buffers)))
        for name, array in checkpoint.buffers.items():
            _write_bytes(file, name.encode("utf-8"))
            file.write(struct.pack("<I", array.ndim))
            file.write(struct.pack(f"<{array.ndim}I", *array.shape))
            file.write(np.ascontiguousarray(array, dtype="<f8").tobytes())

        file.write(struct.pack("<Q", checkpoint.iteration))
        _write_bytes(file, json.dumps(checkpoint.rng_state, sort_keys=True).encode("utf-8"))
        _write_bytes(file, checkpoint.config_hash.encode("ascii"))
    logger.debug("saved checkpoint %s at iteration %d", path, checkpoint.iteration)
    return path


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CheckpointError(f"checkpoint truncated at byte {self.offset}")
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> Tuple[int, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def u32(self) -> int:
        return self.unpack("<I")[0]

    def blob(self) -> bytes:
        return self.take(self.u32())

    def array(self, shape: Tuple[int, ...], dtype: str) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        size = count * np.dtype(dtype).itemsize
        return np.frombuffer(self.take(size), dtype=dtype).reshape(shape).copy()


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    reader = _Reader(Path(path).read_bytes())
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    version = reader.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        config = TrainConfig.model_validate_json(reader.blob())
    except ValidationError as error:
        raise CheckpointError(f"invalid configuration in checkpoint: {error}") from error

    params: Dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        name = reader.blob().decode("utf-8")
        shape = reader.unpack("<4I")
        params[name] = reader.array(shape, "<f4").astype(np.float32)

    buffers: Dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        name = reader.blob().decode("utf-8")
        rank = reader.u32()
        shape = reader.unpack(f"<{rank}I")
        buffers[name] = reader.array(shape, "<f8").astype(np.float64)

    iteration = reader.unpack("<Q")[0]
    rng_state = json.loads(reader.blob().decode("utf-8"))
    config_hash = reader.blob().decode("ascii")
    return Checkpoint(config, params, buffers, iteration, rng_state, config_hash)
