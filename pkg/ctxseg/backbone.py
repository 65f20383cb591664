from dataclasses import dataclass
from typing import Iterator, List, Sequence

from .errors import ConfigurationError, InvalidArgumentError
from .layers import Activation, ConvLayer, Mode, Norm, ParamStore
from .ops import add, relu
from .tensor import Tensor

STAGE_STRIDES = (4, 8, 16, 32)
REQUIRED_DIVISOR = 32


@dataclass
class StageFeatures:
    s2: Tensor
    s3: Tensor
    s4: Tensor
    s5: Tensor

    def __iter__(self) -> Iterator[Tensor]:
        return iter((self.s2, self.s3, self.s4, self.s5))


def check_divisible(h: int, w: int) -> None:
    if h < REQUIRED_DIVISOR or w < REQUIRED_DIVISOR:
        raise InvalidArgumentError(
            f"input must be at least {REQUIRED_DIVISOR}x{REQUIRED_DIVISOR}, got {h}x{w}"
        )
    if h % REQUIRED_DIVISOR or w % REQUIRED_DIVISOR:
        raise InvalidArgumentError(
            f"input height and width must be divisible by {REQUIRED_DIVISOR}, got {h}x{w}"
        )


class BasicBlock:
    def __init__(
        self, store: ParamStore, name: str, c_in: int, c_out: int, stride: int, bn_momentum: float
    ) -> None:
        self.conv1 = ConvLayer(
            store, f"{name}.conv1", c_in, c_out, kernel=3, stride=stride, bn_momentum=bn_momentum
        )
        self.conv2 = ConvLayer(
            store, f"{name}.conv2", c_out, c_out, kernel=3,
            activation=Activation.NONE, bn_momentum=bn_momentum,
        )
        self.shortcut = None
        if stride != 1 or c_in != c_out:
            self.shortcut = ConvLayer(
                store, f"{name}.shortcut", c_in, c_out, kernel=1, stride=stride,
                activation=Activation.NONE, bn_momentum=bn_momentum,
            )

    def forward(self, x: Tensor, mode: Mode = Mode.EVAL) -> Tensor:
        residual = self.conv2(self.conv1(x, mode), mode)
        identity = self.shortcut(x, mode) if self.shortcut else x
        return relu(add(residual, identity))

    __call__ = forward


class Backbone:
    """Stride-2 stem, then four residual stages at 1/4, 1/8, 1/16 and 1/32."""

    def __init__(
        self,
        store: ParamStore,
        widths: Sequence[int] = (16, 32, 64, 128),
        stem_width: int = 8,
        blocks_per_stage: int = 2,
        in_channels: int = 3,
        bn_momentum: float = 0.1,
        name: str = "backbone",
    ) -> None:
        if len(widths) != len(STAGE_STRIDES):
            raise ConfigurationError(f"need {len(STAGE_STRIDES)} stage widths, got {len(widths)}")
        if any(a > b for a, b in zip(widths, widths[1:])):
            raise ConfigurationError(f"stage widths must be non-decreasing, got {tuple(widths)}")
        self.widths = tuple(widths)
        self.stem = ConvLayer(
            store, f"{name}.stem", in_channels, stem_width, kernel=3, stride=2,
            norm=Norm.BATCH, bn_momentum=bn_momentum,
        )
        self.stages: List[List[BasicBlock]] = []
        c_in = stem_width
        for index, width in enumerate(widths, start=2):
            blocks = []
            for b in range(blocks_per_stage):
                blocks.append(
                    BasicBlock(
                        store, f"{name}.stage{index}.block{b}", c_in, width,
                        stride=2 if b == 0 else 1, bn_momentum=bn_momentum,
                    )
                )
                c_in = width
            self.stages.append(blocks)

    def forward(self, x: Tensor, mode: Mode = Mode.EVAL) -> StageFeatures:
        check_divisible(x.h, x.w)
        y = self.stem(x, mode)
        outputs = []
        for blocks in self.stages:
            for block in blocks:
                y = block(y, mode)
            outputs.append(y)
        return StageFeatures(*outputs)

    __call__ = forward


def padded_extent(size: int) -> int:
    """Smallest multiple of 32 that is >= ``size``."""
    return -(-size // REQUIRED_DIVISOR) * REQUIRED_DIVISOR
