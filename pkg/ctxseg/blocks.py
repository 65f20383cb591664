import logging
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import ConfigurationError, InvalidArgumentError, ShapeError
from .layers import Activation, ConvLayer, Mode, Norm, ParamStore
from .ops import (
    add,
    bilinear_upsample,
    channel_max_squeeze,
    concat_channels,
    conv2d,
    crop,
    mul,
    resize_bilinear,
    sigmoid,
)
from .tensor import Tensor

logger = logging.getLogger(__name__)

NUM_PATHS = 4


def condensed_width(channels: int, cardinality: int) -> int:
    """C/2 rounded up to the next multiple of the cardinality."""
    half = max(1, channels // 2)
    return -(-half // cardinality) * cardinality


class CcpbBlock:
    def __init__(
        self,
        store: ParamStore,
        name: str,
        channels: int,
        num_classes: int,
        cardinality: int = 3,
        reduced: Optional[int] = None,
        bn_momentum: float = 0.1,
    ) -> None:
        if cardinality < 1:
            raise ConfigurationError(f"{name}: cardinality must be >= 1")
        reduced = condensed_width(channels, cardinality) if reduced is None else reduced
        if reduced % cardinality:
            raise ConfigurationError(
                f"{name}: reduced width {reduced} is not divisible by cardinality {cardinality}"
            )
        if reduced >= channels:
            raise ConfigurationError(
                f"{name}: reduced width {reduced} must be smaller than input width {channels}"
            )
        self.channels, self.reduced, self.num_classes = channels, reduced, num_classes
        branch_width = reduced // cardinality

        self.reduce = ConvLayer(store, f"{name}.reduce", channels, reduced, bn_momentum=bn_momentum)
        self.branches: List[List[ConvLayer]] = []
        for k in range(cardinality):
            layers = [
                ConvLayer(store, f"{name}.branch{k}.0", reduced, branch_width, bn_momentum=bn_momentum)
            ]
            # Branch k stacks k 3x3 convolutions: receptive fields 1, 3, 5, ...
            for depth in range(1, k + 1):
                layers.append(
                    ConvLayer(
                        store, f"{name}.branch{k}.{depth}", branch_width, branch_width,
                        kernel=3, bn_momentum=bn_momentum,
                    )
                )
            self.branches.append(layers)
        self.project = ConvLayer(
            store, f"{name}.project", reduced, num_classes,
            norm=Norm.NONE, activation=Activation.NONE,
        )

    def condense(self, f: Tensor, mode: Mode = Mode.EVAL) -> Tensor:
        """Residual merge f' + concat(T_1(f'), ..., T_D(f'))."""
        if f.c != self.channels:
            raise ShapeError(f"CCPB expects {self.channels} channels, got {f.c}", dim="c")
        reduced = self.reduce(f, mode)
        outputs = []
        for layers in self.branches:
            y = reduced
            for layer in layers:
                y = layer(y, mode)
            outputs.append(y)
        return add(reduced, concat_channels(outputs))

    def forward(self, f: Tensor, mode: Mode = Mode.EVAL) -> Tensor:
        return self.project(self.condense(f, mode), mode)

    __call__ = forward


def check_ladder(features: Sequence[Tensor], channels: int) -> None:
    if len(features) != NUM_PATHS:
        raise InvalidArgumentError(f"BCIB needs {NUM_PATHS} paths, got {len(features)}")
    for i, f in enumerate(features):
        if f.c != channels:
            raise ShapeError(f"path {i + 1} has {f.c} channels, expected {channels}", dim="c")
    for i, (upper, lower) in enumerate(zip(features, features[1:]), start=1):
        if (upper.h, upper.w) != (2 * lower.h, 2 * lower.w):
            raise InvalidArgumentError(
                f"paths {i} and {i + 1} are not a dyadic pair: "
                f"{upper.h}x{upper.w} vs {lower.h}x{lower.w}"
            )


class BcibBlock:
    """
    Every path i receives its own features, bilinear upsamplings of every
    deeper path and stride-convolution downsamplings of every shallower one.
    """

    def __init__(
        self,
        store: ParamStore,
        name: str,
        channels: int,
        norm: bool = True,
        bn_momentum: float = 0.1,
    ) -> None:
        self.channels = channels
        self.down: Dict[Tuple[int, int], List[ConvLayer]] = {}
        for target in range(NUM_PATHS):
            for source in range(target):
                # A 2^k reduction is a chain of k stride-2 convolutions.
                self.down[(source, target)] = [
                    ConvLayer(
                        store, f"{name}.down{source}to{target}.{k}", channels, channels,
                        kernel=3, stride=2,
                        norm=Norm.BATCH if norm else Norm.NONE,
                        activation=Activation.RELU if norm else Activation.NONE,
                        bias=False, bn_momentum=bn_momentum,
                    )
                    for k in range(target - source)
                ]

    def downsample(self, f: Tensor, source: int, target: int, mode: Mode) -> Tensor:
        for layer in self.down[(source, target)]:
            f = layer(f, mode)
        return f

    def forward(self, features: Sequence[Tensor], mode: Mode = Mode.EVAL) -> List[Tensor]:
        check_ladder(features, self.channels)
        fused = []
        for i, own in enumerate(features):
            total = own
            for m in range(i + 1, NUM_PATHS):
                total = add(total, bilinear_upsample(features[m], 2 ** (m - i)))
            for n in range(i):
                total = add(total, self.downsample(features[n], n, i, mode))
            fused.append(total)
        return fused

    __call__ = forward


class McfbBlock:
    """
    Local 3x3 plus factorized KxK long-range context, gated by a global
    attention map built from 1xM / Mx1 convolutions over the channel max.
    """

    def __init__(
        self,
        store: ParamStore,
        name: str,
        channels: int,
        global_size: int,
        long_kernel: int = 5,
        policy: str = "resample",
        bn_momentum: float = 0.1,
    ) -> None:
        if policy not in ("strict", "resample"):
            raise ConfigurationError(f"{name}: unknown global kernel policy {policy!r}")
        self.name = name
        self.store = store
        self.channels = channels
        self.global_size = global_size
        self.policy = policy
        self._warned_resample = False
        k = long_kernel
        self.local = ConvLayer(store, f"{name}.local", channels, channels, kernel=3, bn_momentum=bn_momentum)
        self.long_rows = ConvLayer(
            store, f"{name}.long.rows", channels, channels,
            kernel=(k, 1), padding=(k // 2, 0), bn_momentum=bn_momentum,
        )
        self.long_cols = ConvLayer(
            store, f"{name}.long.cols", channels, channels,
            kernel=(1, k), padding=(0, k // 2), bn_momentum=bn_momentum,
        )
        m = global_size
        self.global_cols = ConvLayer(
            store, f"{name}.global.cols", 1, 1, kernel=(1, m),
            norm=Norm.NONE, activation=Activation.NONE,
        )
        self.global_rows = ConvLayer(
            store, f"{name}.global.rows", 1, 1, kernel=(m, 1),
            norm=Norm.NONE, activation=Activation.NONE,
        )

    def long_range(self, f: Tensor, mode: Mode = Mode.EVAL) -> Tensor:
        return self.long_cols(self.long_rows(f, mode), mode)

    def _global_kernels(self, size: int) -> Tuple[Tensor, Tensor]:
        cols, rows = self.global_cols.weight, self.global_rows.weight
        if size == self.global_size:
            return cols, rows
        if self.policy == "strict":
            raise InvalidArgumentError(
                f"{self.name}: global kernel built for M={self.global_size}, input needs M={size}"
            )
        if not self._warned_resample:
            self._warned_resample = True
            logger.warning(
                "%s: rebuilding global kernel from M=%d to M=%d by bilinear resampling",
                self.name, self.global_size, size,
            )
        return resize_bilinear(cols, 1, size), resize_bilinear(rows, size, 1)

    def attention(self, f: Tensor, mode: Mode = Mode.EVAL) -> Tensor:
        """One-channel map in (0, 1), resolution preserved."""
        size = max(f.h, f.w)
        cols, rows = self._global_kernels(size)
        squeezed = channel_max_squeeze(f)
        # Even M pads one column (row) too many; crop back to (h, w).
        y = conv2d(squeezed, cols, self.global_cols.bias, padding=(0, size // 2))
        y = crop(y, f.h, f.w)
        y = conv2d(y, rows, self.global_rows.bias, padding=(size // 2, 0))
        y = crop(y, f.h, f.w)
        return sigmoid(y)

    @staticmethod
    def fuse(f_sl: Tensor, f_g: Tensor) -> Tensor:
        return add(f_sl, mul(f_sl, f_g))

    def forward(self, f: Tensor, mode: Mode = Mode.EVAL) -> Tensor:
        if f.c != self.channels:
            raise ShapeError(f"MCFB expects {self.channels} channels, got {f.c}", dim="c")
        f_sl = add(self.local(f, mode), self.long_range(f, mode))
        return self.fuse(f_sl, self.attention(f, mode))

    __call__ = forward
