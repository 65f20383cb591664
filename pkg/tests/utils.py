import json

import numpy as np
from typer.testing import CliRunner

from ctxseg import app
from ctxseg.config import TrainConfig

runner = CliRunner()


def tiny_config(**overrides):
    """Small network and dataset so a full forward pass runs in milliseconds."""
    values = dict(
        num_classes=3,
        widths=(4, 4, 8, 8),
        stem_width=4,
        blocks_per_stage=1,
        crop=32,
        canvas=32,
        synthetic_train=2,
        synthetic_val=2,
        epochs=1,
        momentum=0.9,
    )
    values.update(overrides)
    return TrainConfig(**values)


def write_config(path, config):
    path.write_text(config.to_json(), encoding="utf-8")
    return path


def cmd_args(command, **kwargs):
    arguments = [command]
    for key, value in kwargs.items():
        arguments.append(key)
        if isinstance(value, bool):
            continue
        arguments.append(str(value))
    return arguments


def naive_conv2d(x, weight, bias=None, stride=1, padding=0):
    """Direct summation over every output site and kernel tap."""
    n, c_in, h, w = x.shape
    c_out, _, kh, kw = weight.shape
    padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((n, c_out, out_h, out_w))
    for b in range(n):
        for o in range(c_out):
            for i in range(out_h):
                for j in range(out_w):
                    total = 0.0
                    for c in range(c_in):
                        for p in range(kh):
                            for q in range(kw):
                                total += (
                                    padded[b, c, i * stride + p, j * stride + q]
                                    * weight[o, c, p, q]
                                )
                    out[b, o, i, j] = total + (bias[0, o, 0, 0] if bias is not None else 0.0)
    return out


def bilinear_oracle(image, out_h, out_w):
    """Per-pixel half-pixel-center bilinear interpolation of a 2-D array."""
    in_h, in_w = image.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        y = min(max((i + 0.5) * in_h / out_h - 0.5, 0.0), in_h - 1)
        y0 = int(np.floor(y))
        y1 = min(y0 + 1, in_h - 1)
        fy = y - y0
        for j in range(out_w):
            x = min(max((j + 0.5) * in_w / out_w - 0.5, 0.0), in_w - 1)
            x0 = int(np.floor(x))
            x1 = min(x0 + 1, in_w - 1)
            fx = x - x0
            out[i, j] = (
                image[y0, x0] * (1 - fy) * (1 - fx)
                + image[y0, x1] * (1 - fy) * fx
                + image[y1, x0] * fy * (1 - fx)
                + image[y1, x1] * fy * fx
            )
    return out


def dump_json(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path
