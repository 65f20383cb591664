import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np
from numpy.typing import DTypeLike

from .errors import ConfigurationError
from .ops import IntPair, as_pair, batch_norm, conv2d, global_avg_pool, mul, relu, sigmoid
from .tensor import Tensor

logger = logging.getLogger(__name__)


class Mode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


class Norm(str, Enum):
    NONE = "none"
    BATCH = "batch"


class Activation(str, Enum):
    NONE = "none"
    RELU = "relu"


class ParamKind(str, Enum):
    WEIGHT = "weight"
    BIAS = "bias"
    BN_WEIGHT = "bn_weight"
    BN_BIAS = "bn_bias"


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: Tuple[int, ...]
    kind: ParamKind


class ParamStore:
    """
    Named registry of learnable tensors plus non-learnable buffers
    (batch-norm statistics, optimizer state). Iteration follows
    declaration order.
    """

    def __init__(self) -> None:
        self.specs: Dict[str, ParamSpec] = {}
        self.params: Dict[str, Tensor] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        self.seed: Optional[int] = None

    def declare(self, name: str, shape: Sequence[int], kind: ParamKind) -> None:
        if name in self.specs:
            raise ConfigurationError(f"Parameter {name!r} declared twice")
        if self.initialized:
            raise ConfigurationError(f"Cannot declare {name!r} after initialization")
        self.specs[name] = ParamSpec(name, tuple(int(s) for s in shape), kind)

    def declare_buffer(self, name: str, value: np.ndarray) -> None:
        if name in self.buffers:
            raise ConfigurationError(f"Buffer {name!r} declared twice")
        self.buffers[name] = value

    @property
    def initialized(self) -> bool:
        return bool(self.params)

    def __getitem__(self, name: str) -> Tensor:
        if not self.initialized:
            raise ConfigurationError("Parameters are not initialized, call init_params")
        return self.params[name]

    def __contains__(self, name: object) -> bool:
        return name in self.specs

    def __iter__(self) -> Iterator[str]:
        return iter(self.specs)

    def __len__(self) -> int:
        return len(self.specs)

    def items(self) -> List[Tuple[str, Tensor]]:
        return [(name, self.params[name]) for name in self.specs]

    def num_parameters(self) -> int:
        return sum(int(np.prod(spec.shape)) for spec in self.specs.values())

    def no_decay(self, name: str) -> bool:
        return self.specs[name].kind in (ParamKind.BN_WEIGHT, ParamKind.BN_BIAS)

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.grad = None

    def cast(self, dtype: DTypeLike) -> None:
        """Switches every parameter to ``dtype`` in place, e.g. for 64-bit checks."""
        for tensor in self.params.values():
            tensor.data = tensor.data.astype(dtype)
            tensor.grad = None


def init_params(store: ParamStore, seed: int) -> ParamStore:
    """
    He-normal conv weights, zero biases, unit batch-norm scale and zero
    shift, all drawn in declaration order from ``seed``.
    """
    if store.initialized:
        raise ConfigurationError("ParamStore is already initialized")
    rng = np.random.default_rng(seed)
    for spec in store.specs.values():
        if spec.kind is ParamKind.WEIGHT:
            fan_in = int(np.prod(spec.shape[1:]))
            data = rng.standard_normal(spec.shape) * np.sqrt(2.0 / fan_in)
        elif spec.kind is ParamKind.BN_WEIGHT:
            data = np.ones(spec.shape)
        else:
            data = np.zeros(spec.shape)
        store.params[spec.name] = Tensor(
            data.astype(np.float32), requires_grad=True, name=spec.name
        )
    store.seed = seed
    return store


_warned_uncalibrated: Set[str] = set()


class ConvLayer:
    """conv -> optional batch-norm -> optional relu."""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        c_in: int,
        c_out: int,
        kernel: IntPair = 1,
        stride: IntPair = 1,
        padding: Optional[IntPair] = None,
        norm: Norm = Norm.BATCH,
        activation: Activation = Activation.RELU,
        bias: Optional[bool] = None,
        bn_momentum: float = 0.1,
    ) -> None:
        kh, kw = as_pair(kernel)
        if min(c_in, c_out, kh, kw) < 1:
            raise ConfigurationError(
                f"{name}: extents must be >= 1, got c_in={c_in} c_out={c_out} kernel={(kh, kw)}"
            )
        self.store = store
        self.name = name
        self.c_in, self.c_out = c_in, c_out
        self.kernel = (kh, kw)
        self.stride = as_pair(stride)
        self.padding = as_pair(padding) if padding is not None else (kh // 2, kw // 2)
        self.norm = norm
        self.activation = activation
        # Biases are redundant in front of batch-norm.
        self.has_bias = norm is Norm.NONE if bias is None else bias
        self.bn_momentum = bn_momentum

        store.declare(f"{name}.weight", (c_out, c_in, kh, kw), ParamKind.WEIGHT)
        if self.has_bias:
            store.declare(f"{name}.bias", (1, c_out, 1, 1), ParamKind.BIAS)
        if norm is Norm.BATCH:
            store.declare(f"{name}.bn.weight", (1, c_out, 1, 1), ParamKind.BN_WEIGHT)
            store.declare(f"{name}.bn.bias", (1, c_out, 1, 1), ParamKind.BN_BIAS)
            store.declare_buffer(f"{name}.bn.running_mean", np.zeros(c_out))
            store.declare_buffer(f"{name}.bn.running_var", np.ones(c_out))
            store.declare_buffer(f"{name}.bn.updates", np.zeros(1))

    @property
    def weight(self) -> Tensor:
        return self.store[f"{self.name}.weight"]

    @property
    def bias(self) -> Optional[Tensor]:
        return self.store[f"{self.name}.bias"] if self.has_bias else None

    def forward(self, x: Tensor, mode: Mode = Mode.EVAL) -> Tensor:
        y = conv2d(x, self.weight, self.bias, self.stride, self.padding)
        if self.norm is Norm.BATCH:
            y = self._batch_norm(y, mode)
        if self.activation is Activation.RELU:
            y = relu(y)
        return y

    __call__ = forward

    def _batch_norm(self, y: Tensor, mode: Mode) -> Tensor:
        prefix = f"{self.name}.bn"
        buffers = self.store.buffers
        updates = buffers[f"{prefix}.updates"]
        training = Mode(mode) is Mode.TRAIN
        if not training and updates[0] == 0 and self.name not in _warned_uncalibrated:
            _warned_uncalibrated.add(self.name)
            logger.warning(
                "%s: eval mode before any running-statistics update, "
                "using initial statistics (mean 0, var 1)",
                self.name,
            )
        out = batch_norm(
            y,
            self.store[f"{prefix}.weight"],
            self.store[f"{prefix}.bias"],
            buffers[f"{prefix}.running_mean"],
            buffers[f"{prefix}.running_var"],
            training=training,
            momentum=self.bn_momentum,
        )
        if training:
            updates += 1
        return out


class ChannelAttention:
    """Squeeze-and-excitation gating over channels."""

    def __init__(self, store: ParamStore, name: str, channels: int, reduction: int = 4) -> None:
        if reduction < 1:
            raise ConfigurationError(f"{name}: reduction ratio must be >= 1")
        hidden = max(1, channels // reduction)
        self.squeeze = ConvLayer(
            store, f"{name}.squeeze", channels, hidden,
            norm=Norm.NONE, activation=Activation.RELU,
        )
        self.excite = ConvLayer(
            store, f"{name}.excite", hidden, channels,
            norm=Norm.NONE, activation=Activation.NONE,
        )

    def weights(self, x: Tensor, mode: Mode = Mode.EVAL) -> Tensor:
        """The (n, c, 1, 1) gate, entries in (0, 1)."""
        return sigmoid(self.excite(self.squeeze(global_avg_pool(x), mode), mode))

    def forward(self, x: Tensor, mode: Mode = Mode.EVAL) -> Tensor:
        return mul(x, self.weights(x, mode))

    __call__ = forward
