from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidArgumentError, ShapeError
from .tensor import Array, Tensor, make_output

IntPair = Union[int, Tuple[int, int]]


def as_pair(value: IntPair) -> Tuple[int, int]:
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def _dtype(*tensors: Tensor) -> np.dtype:
    return np.result_type(*(t.dtype for t in tensors))


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    for dim, x, y in zip("nchw", a.shape, b.shape):
        if x != y:
            raise ShapeError(f"{op}: dimension {dim} differs ({x} vs {y})", dim=dim)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: IntPair = 1,
    padding: IntPair = 0,
) -> Tensor:
    """
    Zero-padded 2-D cross-correlation.

    :param x: Input (n, c_in, h, w).
    :param weight: Kernel (c_out, c_in, k_h, k_w).
    :param bias: Optional (1, c_out, 1, 1).
    :return: (n, c_out, (h+2p_h-k_h)//s_h+1, (w+2p_w-k_w)//s_w+1).
    """
    sh, sw = as_pair(stride)
    ph, pw = as_pair(padding)
    if sh < 1 or sw < 1:
        raise InvalidArgumentError(f"conv2d: stride must be >= 1, got {(sh, sw)}")
    if ph < 0 or pw < 0:
        raise InvalidArgumentError(f"conv2d: padding must be >= 0, got {(ph, pw)}")
    c_out, c_in, kh, kw = weight.shape
    n, c, h, w = x.shape
    if c != c_in:
        raise ShapeError(
            f"conv2d: input has {c} channels, kernel expects c_in={c_in}", dim="c_in"
        )
    if kh > h + 2 * ph:
        raise ShapeError(f"conv2d: k_h={kh} exceeds padded height {h + 2 * ph}", dim="k_h")
    if kw > w + 2 * pw:
        raise ShapeError(f"conv2d: k_w={kw} exceeds padded width {w + 2 * pw}", dim="k_w")
    if bias is not None and bias.shape != (1, c_out, 1, 1):
        raise ShapeError(
            f"conv2d: bias must have shape (1, {c_out}, 1, 1), got {bias.shape}",
            dim="bias",
        )

    dtype = _dtype(x, weight) if bias is None else _dtype(x, weight, bias)
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    padded = np.pad(x.data.astype(np.float64), ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    windows = windows[:, :, :oh, :ow]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c_in * kh * kw)
    kernel = weight.data.astype(np.float64).reshape(c_out, -1)
    out = (cols @ kernel.T).reshape(n, oh, ow, c_out).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.astype(np.float64)

    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        flat = grad.astype(np.float64).transpose(0, 2, 3, 1).reshape(-1, c_out)
        d_weight = (flat.T @ cols).reshape(weight.shape)
        d_cols = (flat @ kernel).reshape(n, oh, ow, c_in, kh, kw)
        d_padded = np.zeros(padded.shape)
        for i in range(kh):
            for j in range(kw):
                d_padded[
                    :, :, i : i + sh * (oh - 1) + 1 : sh, j : j + sw * (ow - 1) + 1 : sw
                ] += d_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        d_x = d_padded[:, :, ph : ph + h, pw : pw + w]
        grads: List[Optional[Array]] = [
            d_x.astype(x.dtype),
            d_weight.astype(weight.dtype),
        ]
        if bias is not None:
            grads.append(flat.sum(axis=0).reshape(bias.shape).astype(bias.dtype))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return make_output("conv2d", out.astype(dtype), inputs, _backward)


def interp_matrix(in_size: int, out_size: int) -> Array:
    """
    Half-pixel-center bilinear weights, shape (out_size, in_size).
    Source coordinate of output index d is (d + 0.5) * in / out - 0.5,
    clamped to [0, in - 1].
    """
    if in_size < 1 or out_size < 1:
        raise InvalidArgumentError(f"interp_matrix: sizes must be >= 1, got {(in_size, out_size)}")
    dst = np.arange(out_size, dtype=np.float64)
    src = np.clip((dst + 0.5) * in_size / out_size - 0.5, 0.0, in_size - 1)
    low = np.floor(src).astype(np.int64)
    high = np.minimum(low + 1, in_size - 1)
    frac = src - low
    matrix = np.zeros((out_size, in_size))
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, low), 1.0 - frac)
    np.add.at(matrix, (rows, high), frac)
    return matrix


def resize_array(array: Array, out_h: int, out_w: int) -> Array:
    """Bilinear resize of the two trailing axes of a plain array."""
    rows = interp_matrix(array.shape[-2], out_h)
    cols = interp_matrix(array.shape[-1], out_w)
    return rows @ array.astype(np.float64) @ cols.T


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    rows = interp_matrix(x.h, out_h)
    cols = interp_matrix(x.w, out_w)
    out = rows @ x.data.astype(np.float64) @ cols.T

    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        return [(rows.T @ grad.astype(np.float64) @ cols).astype(x.dtype)]

    return make_output("resize_bilinear", out.astype(x.dtype), (x,), _backward)


def bilinear_upsample(x: Tensor, ratio: int) -> Tensor:
    if not isinstance(ratio, (int, np.integer)) or ratio < 1:
        raise InvalidArgumentError(f"bilinear_upsample: ratio must be an integer >= 1, got {ratio!r}")
    return resize_bilinear(x, x.h * int(ratio), x.w * int(ratio))


def channel_max_squeeze(x: Tensor) -> Tensor:
    # argmax picks the lowest channel index on ties.
    index = np.argmax(x.data, axis=1)[:, None]
    out = np.take_along_axis(x.data, index, axis=1)

    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        d_x = np.zeros_like(x.data)
        np.put_along_axis(d_x, index, grad.astype(x.dtype), axis=1)
        return [d_x]

    return make_output("channel_max_squeeze", out, (x,), _backward)


def global_avg_pool(x: Tensor) -> Tensor:
    out = x.data.astype(np.float64).mean(axis=(2, 3), keepdims=True)
    area = x.h * x.w

    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        return [np.broadcast_to(grad / area, x.shape).astype(x.dtype)]

    return make_output("global_avg_pool", out.astype(x.dtype), (x,), _backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    dtype = _dtype(a, b)

    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        return [grad.astype(a.dtype), grad.astype(b.dtype)]

    return make_output("add", (a.data + b.data).astype(dtype), (a, b), _backward)


def _broadcast_axes(big: Tensor, small: Tensor) -> Tuple[int, ...]:
    axes = []
    for axis, (dim, x, y) in enumerate(zip("nchw", big.shape, small.shape)):
        if x == y:
            continue
        if y != 1 or axis == 0:
            raise ShapeError(
                f"mul: cannot broadcast {small.shape} against {big.shape} on {dim}",
                dim=dim,
            )
        axes.append(axis)
    return tuple(axes)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """
    Elementwise product. One operand may have extent 1 on any of c, h, w
    and is broadcast against the other.
    """
    a_axes: Tuple[int, ...] = ()
    b_axes: Tuple[int, ...] = ()
    if a.shape != b.shape:
        if a.data.size >= b.data.size:
            b_axes = _broadcast_axes(a, b)
        else:
            a_axes = _broadcast_axes(b, a)
    dtype = _dtype(a, b)

    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        d_a = grad * b.data
        d_b = grad * a.data
        if a_axes:
            d_a = d_a.sum(axis=a_axes, keepdims=True)
        if b_axes:
            d_b = d_b.sum(axis=b_axes, keepdims=True)
        return [d_a.astype(a.dtype), d_b.astype(b.dtype)]

    return make_output("mul", (a.data * b.data).astype(dtype), (a, b), _backward)


def scale(x: Tensor, alpha: float) -> Tensor:
    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        return [(grad * alpha).astype(x.dtype)]

    return make_output("scale", (x.data * alpha).astype(x.dtype), (x,), _backward)


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise InvalidArgumentError("concat_channels: need at least one tensor")
    first = tensors[0]
    for t in tensors[1:]:
        for dim in ("n", "h", "w"):
            if getattr(t, dim) != getattr(first, dim):
                raise ShapeError(
                    f"concat_channels: dimension {dim} differs "
                    f"({getattr(first, dim)} vs {getattr(t, dim)})",
                    dim=dim,
                )
    dtype = _dtype(*tensors)
    bounds = np.cumsum([0] + [t.c for t in tensors])
    out = np.concatenate([t.data for t in tensors], axis=1).astype(dtype)

    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        return [
            grad[:, bounds[i] : bounds[i + 1]].astype(t.dtype)
            for i, t in enumerate(tensors)
        ]

    return make_output("concat_channels", out, tuple(tensors), _backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        return [(grad * mask).astype(x.dtype)]

    return make_output("relu", np.where(mask, x.data, 0).astype(x.dtype), (x,), _backward)


def sigmoid(x: Tensor) -> Tensor:
    out = (0.5 * (1.0 + np.tanh(0.5 * x.data.astype(np.float64)))).astype(x.dtype)

    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        s = out.astype(np.float64)
        return [(grad * s * (1.0 - s)).astype(x.dtype)]

    return make_output("sigmoid", out, (x,), _backward)


def _softmax(data: Array) -> Array:
    shifted = data.astype(np.float64) - data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)  # type: ignore


def softmax_channels(x: Tensor) -> Tensor:
    probs = _softmax(x.data)

    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        g = grad.astype(np.float64)
        inner = (g * probs).sum(axis=1, keepdims=True)
        return [(probs * (g - inner)).astype(x.dtype)]

    return make_output("softmax_channels", probs.astype(x.dtype), (x,), _backward)


def sum_all(x: Tensor) -> Tensor:
    total = x.data.astype(np.float64).sum().reshape(1, 1, 1, 1)

    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        return [np.broadcast_to(grad.reshape(()), x.shape).astype(x.dtype)]

    return make_output("sum_all", total.astype(x.dtype), (x,), _backward)


def crop(x: Tensor, h: int, w: int) -> Tensor:
    """Keeps the top-left (h, w) window."""
    if not (1 <= h <= x.h and 1 <= w <= x.w):
        raise InvalidArgumentError(f"crop: window {(h, w)} outside {(x.h, x.w)}")
    if (h, w) == (x.h, x.w):
        return x

    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        d_x = np.zeros_like(x.data)
        d_x[:, :, :h, :w] = grad
        return [d_x]

    return make_output("crop", x.data[:, :, :h, :w].copy(), (x,), _backward)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Array,
    running_var: Array,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """
    Per-channel normalization. In training mode the batch statistics are
    used and the running buffers are updated in place.
    """
    if gamma.shape != (1, x.c, 1, 1) or beta.shape != (1, x.c, 1, 1):
        raise ShapeError(f"batch_norm: affine parameters must be (1, {x.c}, 1, 1)", dim="c")
    data = x.data.astype(np.float64)
    g = gamma.data.astype(np.float64)
    axes = (0, 2, 3)
    count = x.n * x.h * x.w
    if training:
        mean = data.mean(axis=axes, keepdims=True)
        var = data.var(axis=axes, keepdims=True)
        unbiased = var * count / (count - 1) if count > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean.reshape(-1)
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased.reshape(-1)
    else:
        mean = running_mean.astype(np.float64).reshape(1, -1, 1, 1)
        var = running_var.astype(np.float64).reshape(1, -1, 1, 1)
    inv_std = 1.0 / np.sqrt(var + eps)
    normalized = (data - mean) * inv_std
    out = g * normalized + beta.data.astype(np.float64)
    dtype = _dtype(x, gamma, beta)

    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        dy = grad.astype(np.float64)
        d_gamma = (dy * normalized).sum(axis=axes, keepdims=True)
        d_beta = dy.sum(axis=axes, keepdims=True)
        d_norm = dy * g
        if training:
            d_x = (
                inv_std
                / count
                * (
                    count * d_norm
                    - d_norm.sum(axis=axes, keepdims=True)
                    - normalized * (d_norm * normalized).sum(axis=axes, keepdims=True)
                )
            )
        else:
            d_x = d_norm * inv_std
        return [d_x.astype(x.dtype), d_gamma.astype(gamma.dtype), d_beta.astype(beta.dtype)]

    return make_output("batch_norm", out.astype(dtype), (x, gamma, beta), _backward)


def cross_entropy(logits: Tensor, labels: Array, mask: Array) -> Tensor:
    """
    Mean negative log-likelihood over the pixels selected by ``mask``.

    :param logits: (n, L, h, w).
    :param labels: Integer map (n, h, w); values outside ``mask`` are ignored.
    :param mask: Boolean map (n, h, w).
    :return: 64-bit scalar tensor; zero when the mask is empty.
    """
    expected = (logits.n, logits.h, logits.w)
    if labels.shape != expected or mask.shape != expected:
        raise ShapeError(
            f"cross_entropy: labels {labels.shape} / mask {mask.shape} must be {expected}",
            dim="hw",
        )
    count = int(mask.sum())
    safe = np.where(mask, labels, 0).astype(np.int64)[:, None]
    probs = _softmax(logits.data)
    log_probs = np.log(np.maximum(np.take_along_axis(probs, safe, axis=1)[:, 0], 1e-300))
    if count:
        value = -(log_probs * mask).sum() / count
    else:
        value = 0.0
    out = np.full((1, 1, 1, 1), value, dtype=np.float64)

    def _backward(grad: Array) -> Sequence[Optional[Array]]:
        if not count:
            return [np.zeros_like(logits.data)]
        d_logits = probs.copy()
        np.put_along_axis(
            d_logits, safe, np.take_along_axis(d_logits, safe, axis=1) - 1.0, axis=1
        )
        d_logits *= mask[:, None] * (float(grad.reshape(())) / count)
        return [d_logits.astype(logits.dtype)]

    return make_output("cross_entropy", out, (logits,), _backward)


def softmax_probs(logits: Tensor) -> Array:
    """Channel softmax of the raw values, outside the tape."""
    return _softmax(logits.data)
