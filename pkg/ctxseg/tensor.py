from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import DTypeLike

from .errors import InvalidArgumentError, ShapeError

Array = np.ndarray
Shape = Tuple[int, int, int, int]
BackwardFn = Callable[[Array], Sequence[Optional[Array]]]

FLOAT_TYPES = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(
        self,
        data: Union[Array, Sequence[float], float],
        requires_grad: bool = False,
        name: Optional[str] = None,
    ) -> None:
        array = np.asarray(data)
        if array.dtype not in FLOAT_TYPES:
            array = array.astype(np.float32)
        if array.ndim != 4:
            raise ShapeError(
                f"Tensor must be 4-D (n, c, h, w), got shape {array.shape}", dim="rank"
            )
        for dim, extent in zip("nchw", array.shape):
            if extent < 1:
                raise ShapeError(f"Extent {dim} must be >= 1, got {extent}", dim=dim)
        self.data: Array = array
        self.grad: Optional[Array] = None
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def zeros(cls, shape: Sequence[int], dtype: DTypeLike = np.float32) -> "Tensor":
        return cls(np.zeros(tuple(shape), dtype=dtype))

    @classmethod
    def full(
        cls, shape: Sequence[int], value: float, dtype: DTypeLike = np.float32
    ) -> "Tensor":
        return cls(np.full(tuple(shape), value, dtype=dtype))

    @classmethod
    def randn(
        cls,
        shape: Sequence[int],
        rng: np.random.Generator,
        dtype: DTypeLike = np.float32,
        requires_grad: bool = False,
    ) -> "Tensor":
        return cls(
            rng.standard_normal(tuple(shape)).astype(dtype), requires_grad=requires_grad
        )

    @property
    def shape(self) -> Shape:
        return self.data.shape  # type: ignore

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    @property
    def c(self) -> int:
        return int(self.data.shape[1])

    @property
    def h(self) -> int:
        return int(self.data.shape[2])

    @property
    def w(self) -> int:
        return int(self.data.shape[3])

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise InvalidArgumentError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def astype(self, dtype: DTypeLike) -> "Tensor":
        out = Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)
        out.name = self.name
        return out

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype})"


@dataclass
class TapeEntry:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


@dataclass
class Tape:
    """
    Ordered record of primitive applications. Use as a context manager;
    operations only record while a tape is active.
    """

    entries: List[TapeEntry] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *_exc: object) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.entries)

    def record(
        self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward: BackwardFn
    ) -> None:
        self.entries.append(TapeEntry(op, inputs, output, backward))

    def reset(self) -> None:
        self.entries.clear()


_ACTIVE: List[Tape] = []


def active_tape() -> Optional[Tape]:
    return _ACTIVE[-1] if _ACTIVE else None


def make_output(
    op: str, data: Array, inputs: Tuple[Tensor, ...], backward: BackwardFn
) -> Tensor:
    """
    Wraps ``data`` and records the op when a tape is active and any input
    needs a gradient.
    """
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(op, inputs, out, backward)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """
    Populates ``grad`` on every leaf of ``tape`` that requires a gradient.
    Gradients accumulate into existing ``grad`` arrays; the tape is reset.

    :param loss: Scalar tensor produced on ``tape``.
    :param tape: The tape the forward pass recorded on.
    """
    if loss.data.size != 1:
        raise InvalidArgumentError(
            f"backward needs a scalar loss, got shape {loss.shape}"
        )
    produced: Dict[int, int] = {id(e.output): i for i, e in enumerate(tape.entries)}
    if id(loss) not in produced:
        raise InvalidArgumentError("loss was not produced on this tape")

    grads: Dict[int, Array] = {id(loss): np.ones_like(loss.data)}
    leaves: Dict[int, Tensor] = {}
    for entry in tape.entries[: produced[id(loss)] + 1][::-1]:
        upstream = grads.pop(id(entry.output), None)
        for tensor in entry.inputs:
            if tensor.requires_grad and id(tensor) not in produced:
                leaves[id(tensor)] = tensor
        if upstream is None:
            continue
        for tensor, grad in zip(entry.inputs, entry.backward(upstream)):
            if grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + grad
            else:
                grads[key] = grad

    for key, leaf in leaves.items():
        grad = grads.get(key)
        if grad is None:
            grad = np.zeros_like(leaf.data)
        grad = grad.astype(leaf.dtype, copy=False)
        leaf.grad = grad if leaf.grad is None else leaf.grad + grad
    tape.reset()
