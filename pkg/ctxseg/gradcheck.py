import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .backbone import Backbone
from .blocks import BcibBlock, CcpbBlock, McfbBlock
from .config import TrainConfig
from .errors import InvalidArgumentError
from .layers import ChannelAttention, Mode, ParamStore, init_params
from .loss import OhemConfig, compute_loss
from .network import SegmentationModel
from .ops import (
    add,
    batch_norm,
    bilinear_upsample,
    channel_max_squeeze,
    concat_channels,
    conv2d,
    crop,
    cross_entropy,
    global_avg_pool,
    mul,
    relu,
    resize_bilinear,
    sigmoid,
    softmax_channels,
    sum_all,
)
from .tensor import Tape, Tensor, backward

logger = logging.getLogger(__name__)

# Relative errors are taken against at least this magnitude.
ERROR_FLOOR = 1e-6
# Entries whose absolute error is below this count as agreeing.
ABS_TOL = 1e-6


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    checked: int
    tol: float
    worst: str = ""
    max_abs_error: float = 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def relative_error(analytic: float, numeric: float, floor: float = ERROR_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def project(out: Tensor, seed: int = 0) -> Tensor:
    """Scalar sum(out * R) for a fixed random R of out's shape."""
    weights = np.random.default_rng(seed).standard_normal(out.shape)
    return sum_all(mul(out, Tensor(weights.astype(out.dtype))))


def gradcheck(
    fn: Callable[[], Tensor],
    leaves: Sequence[Tensor],
    eps: float = 1e-3,
    tol: float = 1e-3,
    atol: float = ABS_TOL,
    samples: Optional[int] = None,
    seed: int = 0,
    name: str = "",
) -> GradCheckReport:
    """
    Compares the tape gradient of the scalar ``fn()`` with central
    differences over the entries of ``leaves``.

    :param fn: Zero-argument closure over ``leaves`` returning a scalar.
    :param leaves: 64-bit tensors with ``requires_grad`` set.
    :param atol: Entries closer than this in absolute terms are not scored.
    :param samples: Number of randomly drawn entries to check, all when None.
    """
    for leaf in leaves:
        if leaf.dtype != np.float64:
            raise InvalidArgumentError(f"gradcheck needs 64-bit leaves, {leaf!r} is {leaf.dtype}")
        leaf.grad = None
    with Tape() as tape:
        loss = fn()
    backward(loss, tape)

    entries: List[Tuple[int, int]] = [
        (i, j) for i, leaf in enumerate(leaves) for j in range(leaf.data.size)
    ]
    if samples is not None and samples < len(entries):
        rng = np.random.default_rng(seed)
        picked = rng.choice(len(entries), size=samples, replace=False)
        entries = [entries[k] for k in sorted(picked)]

    worst, worst_at, worst_abs = 0.0, "", 0.0
    for i, j in entries:
        leaf = leaves[i]
        flat = leaf.data.reshape(-1)
        original = flat[j]
        flat[j] = original + eps
        plus = fn().item()
        flat[j] = original - eps
        minus = fn().item()
        flat[j] = original
        numeric = (plus - minus) / (2 * eps)
        analytic = float(leaf.grad.reshape(-1)[j]) if leaf.grad is not None else 0.0
        gap = abs(analytic - numeric)
        worst_abs = max(worst_abs, gap)
        if gap < atol:
            continue
        error = relative_error(analytic, numeric)
        if error > worst:
            worst = error
            worst_at = f"{leaf.name or f'leaf{i}'}[{j}]: analytic {analytic:.6g} numeric {numeric:.6g}"
    report = GradCheckReport(name, worst, len(entries), tol, worst_at, worst_abs)
    logger.debug(
        "gradcheck %s: max rel error %.3g, max abs error %.3g over %d entries",
        name, worst, worst_abs, len(entries),
    )
    return report


def _leaf(rng: np.random.Generator, shape: Sequence[int], name: str) -> Tensor:
    return Tensor(rng.standard_normal(tuple(shape)), requires_grad=True, name=name)


def _away_from_zero(rng: np.random.Generator, shape: Sequence[int], name: str) -> Tensor:
    data = rng.standard_normal(tuple(shape))
    data = np.sign(data) * (np.abs(data) + 0.1)
    return Tensor(data, requires_grad=True, name=name)


def _spaced_channels(rng: np.random.Generator, shape: Sequence[int], name: str) -> Tensor:
    # Channel values differ by at least 0.5 so the argmax survives +-eps.
    n, c, h, w = shape
    order = np.argsort(rng.random((n, c, h, w)), axis=1)
    data = order * 0.5 + rng.random((n, c, h, w)) * 0.1
    return Tensor(data, requires_grad=True, name=name)


def _check_conv2d(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = _leaf(rng, (2, 3, 7, 6), "x")
    w = _leaf(rng, (4, 3, 3, 3), "weight")
    b = _leaf(rng, (1, 4, 1, 1), "bias")
    return gradcheck(
        lambda: project(conv2d(x, w, b, stride=2, padding=1)), [x, w, b], name="conv2d"
    )


def _check_upsample(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = _leaf(rng, (1, 2, 3, 4), "x")
    return gradcheck(lambda: project(bilinear_upsample(x, 4)), [x], name="bilinear_upsample")


def _check_resize(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = _leaf(rng, (1, 1, 5, 3), "x")
    return gradcheck(lambda: project(resize_bilinear(x, 3, 7)), [x], name="resize_bilinear")


def _check_max_squeeze(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = _spaced_channels(rng, (2, 4, 3, 3), "x")
    return gradcheck(lambda: project(channel_max_squeeze(x)), [x], name="channel_max_squeeze")


def _check_pool(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = _leaf(rng, (2, 3, 4, 5), "x")
    return gradcheck(lambda: project(global_avg_pool(x)), [x], name="global_avg_pool")


def _check_add(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    a, b = _leaf(rng, (1, 2, 3, 3), "a"), _leaf(rng, (1, 2, 3, 3), "b")
    return gradcheck(lambda: project(add(a, b)), [a, b], name="add")


def _check_mul(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    a, gate = _leaf(rng, (2, 3, 4, 4), "a"), _leaf(rng, (2, 1, 4, 4), "gate")
    return gradcheck(lambda: project(mul(a, gate)), [a, gate], name="mul")


def _check_concat(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    parts = [_leaf(rng, (1, c, 3, 3), f"part{c}") for c in (1, 2, 3)]
    return gradcheck(lambda: project(concat_channels(parts)), parts, name="concat_channels")


def _check_relu(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = _away_from_zero(rng, (2, 3, 4, 4), "x")
    return gradcheck(lambda: project(relu(x)), [x], name="relu")


def _check_sigmoid(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = _leaf(rng, (1, 3, 4, 4), "x")
    return gradcheck(lambda: project(sigmoid(x)), [x], name="sigmoid")


def _check_softmax(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = _leaf(rng, (2, 4, 3, 3), "x")
    return gradcheck(lambda: project(softmax_channels(x)), [x], name="softmax_channels")


def _check_batch_norm(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = _leaf(rng, (2, 3, 4, 4), "x")
    gamma, beta = _leaf(rng, (1, 3, 1, 1), "gamma"), _leaf(rng, (1, 3, 1, 1), "beta")
    mean, var = np.zeros(3), np.ones(3)
    return gradcheck(
        lambda: project(batch_norm(x, gamma, beta, mean, var, training=True)),
        [x, gamma, beta],
        name="batch_norm",
    )


def _check_crop(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = _leaf(rng, (1, 2, 5, 5), "x")
    return gradcheck(lambda: project(crop(x, 4, 3)), [x], name="crop")


def _check_cross_entropy(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    logits = _leaf(rng, (2, 4, 3, 3), "logits")
    labels = rng.integers(0, 4, size=(2, 3, 3))
    mask = rng.random((2, 3, 3)) > 0.3
    return gradcheck(lambda: cross_entropy(logits, labels, mask), [logits], name="cross_entropy")


def _shadow_store(store: ParamStore, seed: int) -> List[Tensor]:
    init_params(store, seed)
    store.cast(np.float64)
    return [tensor for _, tensor in store.items()]


def _check_ccpb(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    block = CcpbBlock(store, "ccpb", channels=8, num_classes=3, cardinality=3)
    params = _shadow_store(store, seed)
    x = _leaf(rng, (1, 8, 6, 6), "x")
    return gradcheck(
        lambda: project(block(x, Mode.EVAL)), [x] + params, samples=60, seed=seed, name="ccpb"
    )


def _check_bcib(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    block = BcibBlock(store, "bcib", channels=2)
    params = _shadow_store(store, seed)
    paths = [_leaf(rng, (1, 2, 8 // 2**i, 8 // 2**i), f"path{i}") for i in range(4)]

    def fn() -> Tensor:
        outputs = block(paths, Mode.EVAL)
        total = project(outputs[0], seed)
        for k, out in enumerate(outputs[1:], start=1):
            total = add(total, project(out, seed + k))
        return total

    return gradcheck(fn, paths + params, samples=60, seed=seed, name="bcib")


def _check_mcfb(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    block = McfbBlock(store, "mcfb", channels=4, global_size=8, long_kernel=5)
    params = _shadow_store(store, seed)
    x = _leaf(rng, (1, 4, 8, 8), "x")
    return gradcheck(
        lambda: project(block(x, Mode.EVAL)), [x] + params, samples=60, seed=seed, name="mcfb"
    )


def _check_channel_attention(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    attention = ChannelAttention(store, "attention", 8, reduction=4)
    params = _shadow_store(store, seed)
    # Squeeze units stay strictly active.
    store["attention.squeeze.bias"].data[...] = 1.0
    x = _leaf(rng, (2, 8, 4, 4), "x")
    return gradcheck(
        lambda: project(attention(x, Mode.EVAL)), [x] + params, name="channel_attention"
    )


def _check_backbone(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    backbone = Backbone(store, widths=(4, 4, 8, 8), stem_width=4, blocks_per_stage=1)
    params = _shadow_store(store, seed)
    # Every batch-norm output is scaled to 0.1 and lifted by 1, keeping ReLU inputs off the kink.
    for name, tensor in store.items():
        if name.endswith(".bn.weight"):
            tensor.data[...] = 0.1
        elif name.endswith(".bn.bias"):
            tensor.data[...] = 1.0
    for name, buffer in store.buffers.items():
        if name.endswith(".bn.updates"):
            buffer[...] = 1
    x = Tensor(rng.random((1, 3, 32, 32)), requires_grad=True, name="x")

    def fn() -> Tensor:
        stages = list(backbone(x, Mode.EVAL))
        total = project(stages[0], seed)
        for k, feature in enumerate(stages[1:], start=1):
            total = add(total, project(feature, seed + k))
        return total

    return gradcheck(fn, [x] + params, samples=60, seed=seed, name="backbone")


def _check_model(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    config = TrainConfig(
        num_classes=3, widths=(4, 4, 8, 8), stem_width=4, blocks_per_stage=1, crop=32, seed=seed
    )
    model = SegmentationModel(config)
    model.store.cast(np.float64)
    x = Tensor(rng.random((1, 3, 32, 32)))
    labels = rng.integers(0, 3, size=(1, 32, 32))
    # OHEM selection is piecewise constant in the logits.
    ohem = OhemConfig(enabled=False)

    def fn() -> Tensor:
        logits, aux = model.forward(x, Mode.EVAL)
        return compute_loss(logits, aux, labels, lam=config.lam, ohem=ohem).total

    params = [tensor for _, tensor in model.store.items()]
    return gradcheck(fn, params, samples=20, seed=seed, tol=2e-3, name="model")


CHECKS: Dict[str, Callable[[int], GradCheckReport]] = {
    "conv2d": _check_conv2d,
    "bilinear_upsample": _check_upsample,
    "resize_bilinear": _check_resize,
    "channel_max_squeeze": _check_max_squeeze,
    "global_avg_pool": _check_pool,
    "add": _check_add,
    "mul": _check_mul,
    "concat_channels": _check_concat,
    "relu": _check_relu,
    "sigmoid": _check_sigmoid,
    "softmax_channels": _check_softmax,
    "batch_norm": _check_batch_norm,
    "crop": _check_crop,
    "cross_entropy": _check_cross_entropy,
    "ccpb": _check_ccpb,
    "bcib": _check_bcib,
    "mcfb": _check_mcfb,
    "channel_attention": _check_channel_attention,
    "backbone": _check_backbone,
    "model": _check_model,
}


def run_checks(names: Optional[Sequence[str]] = None, seed: int = 0) -> List[GradCheckReport]:
    names = list(CHECKS) if not names else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise InvalidArgumentError(
            f"unknown gradient check {unknown[0]!r}, choose from: {', '.join(CHECKS)}"
        )
    return [CHECKS[name](seed) for name in names]
