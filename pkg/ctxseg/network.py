import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from .backbone import STAGE_STRIDES, Backbone, padded_extent
from .blocks import NUM_PATHS, BcibBlock, CcpbBlock, McfbBlock
from .config import TrainConfig
from .errors import ConfigurationError
from .layers import Activation, ChannelAttention, ConvLayer, Mode, Norm, ParamStore, init_params
from .ops import bilinear_upsample, concat_channels
from .tensor import Tensor

logger = logging.getLogger(__name__)

Head = Union[CcpbBlock, ConvLayer]


@dataclass(frozen=True)
class AblationFlags:
    use_ccpb: bool = True
    use_bcib: bool = True
    use_mcfb: bool = True

    def __post_init__(self) -> None:
        if self.use_bcib and not self.use_ccpb:
            raise ConfigurationError("BCIB requires CCPB to be enabled")
        if self.use_mcfb and not self.use_bcib:
            raise ConfigurationError("MCFB requires BCIB to be enabled")

    @classmethod
    def from_config(cls, config: TrainConfig) -> "AblationFlags":
        return cls(config.use_ccpb, config.use_bcib, config.use_mcfb)

    @property
    def label(self) -> str:
        enabled = [
            name
            for name, on in (("ccpb", self.use_ccpb), ("bcib", self.use_bcib), ("mcfb", self.use_mcfb))
            if on
        ]
        return "+".join(enabled) or "baseline"


# Nested variants from the plain baseline to the full network.
NESTED_VARIANTS = (
    AblationFlags(False, False, False),
    AblationFlags(True, False, False),
    AblationFlags(True, True, False),
    AblationFlags(True, True, True),
)


class SegmentationModel:
    """
    Backbone stages 2-5 condensed to class space, exchanged across
    resolutions, stacked at 1/4 scale, re-weighted per channel, upsampled,
    fused with multi-scale context and classified.
    """

    def __init__(self, config: TrainConfig, seed: Optional[int] = None) -> None:
        self.config = config
        self.flags = AblationFlags.from_config(config)
        self.num_classes = num_classes = config.num_classes
        self.input_size = padded_extent(config.crop)
        self.store = store = ParamStore()
        momentum = config.bn_momentum

        self.backbone = Backbone(
            store, config.widths, config.stem_width, config.blocks_per_stage,
            bn_momentum=momentum,
        )
        self.heads: List[Head] = []
        for index, width in enumerate(config.widths, start=2):
            name = f"head.stage{index}"
            if self.flags.use_ccpb:
                self.heads.append(
                    CcpbBlock(store, name, width, num_classes, config.cardinality, bn_momentum=momentum)
                )
            else:
                self.heads.append(
                    ConvLayer(
                        store, name, width, num_classes,
                        norm=Norm.NONE, activation=Activation.NONE,
                    )
                )
        self.bcib = BcibBlock(store, "bcib", num_classes, bn_momentum=momentum) if self.flags.use_bcib else None
        stacked = NUM_PATHS * num_classes
        self.attention = ChannelAttention(store, "attention", stacked, config.attention_reduction)
        self.mcfb = (
            McfbBlock(
                store, "mcfb", stacked, global_size=self.input_size,
                long_kernel=config.long_kernel, policy=config.global_kernel_policy,
                bn_momentum=momentum,
            )
            if self.flags.use_mcfb
            else None
        )
        self.classifier = ConvLayer(
            store, "classifier", stacked, num_classes,
            norm=Norm.NONE, activation=Activation.NONE,
        )
        init_params(store, config.seed if seed is None else seed)
        logger.debug(
            "built %s model: %d parameters, L=%d", self.flags.label, store.num_parameters(), num_classes
        )

    def forward(self, x: Tensor, mode: Mode = Mode.EVAL) -> Tuple[Tensor, List[Tensor]]:
        """
        :param x: Images (n, 3, h, w), h and w divisible by 32.
        :return: Logits (n, L, h, w) and four auxiliary logits of the same shape.
        """
        stages = self.backbone(x, mode)
        paths = [head(f, mode) for head, f in zip(self.heads, stages)]
        aux_logits = [bilinear_upsample(p, stride) for p, stride in zip(paths, STAGE_STRIDES)]
        if self.bcib is not None:
            paths = self.bcib(paths, mode)
        stacked = concat_channels([bilinear_upsample(p, 2**i) for i, p in enumerate(paths)])
        features = bilinear_upsample(self.attention(stacked, mode), STAGE_STRIDES[0])
        if self.mcfb is not None:
            features = self.mcfb(features, mode)
        return self.classifier(features, mode), aux_logits

    __call__ = forward

    def predict(self, x: Tensor) -> np.ndarray:
        """Argmax label map (n, h, w) in eval mode."""
        logits, _ = self.forward(x, Mode.EVAL)
        return np.argmax(logits.data, axis=1).astype(np.int64)


def model_forward(
    model: SegmentationModel, x: Tensor, mode: Mode = Mode.EVAL
) -> Tuple[Tensor, List[Tensor]]:
    return model.forward(x, mode)


def ablation_variant(model: SegmentationModel, flags: AblationFlags) -> SegmentationModel:
    """
    Same configuration with some blocks replaced by their plain stand-ins.
    Parameters and statistics shared by name and shape are carried over.
    """
    if not isinstance(flags, AblationFlags):
        flags = AblationFlags(**dict(flags))
    config = model.config.with_updates(
        use_ccpb=flags.use_ccpb, use_bcib=flags.use_bcib, use_mcfb=flags.use_mcfb
    )
    variant = SegmentationModel(config, seed=model.store.seed)
    for name, tensor in variant.store.items():
        if name in model.store and model.store[name].shape == tensor.shape:
            tensor.data = model.store[name].data.copy()
    for name, buffer in variant.store.buffers.items():
        source = model.store.buffers.get(name)
        if source is not None and source.shape == buffer.shape:
            buffer[...] = source
    return variant
