from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from ..errors import DataError, RasterParseError
from ..loss import IGNORE_LABEL

PathLike = Union[str, Path]
WHITESPACE = b" \t\n\r\v\f"


def voc_palette() -> np.ndarray:
    """256-entry color table; class k maps to entry k."""
    palette = np.zeros((256, 3), dtype=np.uint8)
    for k in range(256):
        label, r, g, b = k, 0, 0, 0
        for bit in range(8):
            r |= ((label >> 0) & 1) << (7 - bit)
            g |= ((label >> 1) & 1) << (7 - bit)
            b |= ((label >> 2) & 1) << (7 - bit)
            label >>= 3
        palette[k] = (r, g, b)
    return palette


PALETTE = voc_palette()


def _header_fields(data: bytes, count: int) -> Tuple[List[Tuple[bytes, int]], int]:
    """The next ``count`` whitespace-separated tokens and the offset after them."""
    fields: List[Tuple[bytes, int]] = []
    pos = 0
    while len(fields) < count:
        while pos < len(data) and (data[pos] in WHITESPACE or data[pos : pos + 1] == b"#"):
            if data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                pos += 1
        if pos >= len(data):
            raise RasterParseError("truncated header", pos)
        start = pos
        while pos < len(data) and data[pos] not in WHITESPACE:
            pos += 1
        fields.append((data[start:pos], start))
    return fields, pos


def parse_raster(data: bytes) -> np.ndarray:
    """
    :return: (h, w) uint8 for P5, (h, w, 3) uint8 for P6.
    """
    fields, pos = _header_fields(data, 4)
    (magic, _), *dims = fields
    if magic not in (b"P5", b"P6"):
        raise RasterParseError(f"unsupported magic {magic!r}, expected P5 or P6", 0)
    values = []
    for token, offset in dims:
        if not token.isdigit():
            raise RasterParseError(f"expected a decimal number, got {token!r}", offset)
        values.append(int(token))
    width, height, maxval = values
    if width < 1 or height < 1:
        raise RasterParseError(f"invalid size {width}x{height}", dims[0][1])
    if maxval != 255:
        raise RasterParseError(f"only 8-bit rasters are supported, maxval is {maxval}", dims[2][1])
    if pos >= len(data) or data[pos] not in WHITESPACE:
        raise RasterParseError("expected a single whitespace byte after maxval", pos)
    pos += 1
    channels = 3 if magic == b"P6" else 1
    size = width * height * channels
    if len(data) - pos < size:
        raise RasterParseError(f"pixel data truncated, need {size} bytes", len(data))
    pixels = np.frombuffer(data, dtype=np.uint8, count=size, offset=pos)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return pixels.reshape(shape).copy()


def encode_raster(array: np.ndarray) -> bytes:
    """P6 for (h, w, 3), P5 for (h, w); header ``P6\\n<w> <h>\\n255\\n``."""
    if array.dtype != np.uint8:
        raise DataError(f"rasters must be uint8, got {array.dtype}")
    if array.ndim == 3 and array.shape[2] == 3:
        magic = b"P6"
    elif array.ndim == 2:
        magic = b"P5"
    else:
        raise DataError(f"raster must be (h, w) or (h, w, 3), got {array.shape}")
    height, width = array.shape[:2]
    header = magic + f"\n{width} {height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(array).tobytes()


def read_raster(path: PathLike) -> np.ndarray:
    return parse_raster(Path(path).read_bytes())


def write_raster(path: PathLike, array: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_raster(array))
    return path


def read_image(path: PathLike) -> np.ndarray:
    """P6 file to a (3, h, w) float32 image in [0, 1]."""
    raster = read_raster(path)
    if raster.ndim != 3:
        raise DataError(f"{path} is a grayscale raster, expected P6")
    return (raster.transpose(2, 0, 1).astype(np.float32) / 255.0).astype(np.float32)


def write_image(path: PathLike, image: np.ndarray) -> Path:
    rgb = np.clip(np.round(image.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    return write_raster(path, rgb)


def read_labels(path: PathLike, num_classes: int) -> np.ndarray:
    labels = read_raster(path)
    if labels.ndim != 2:
        raise DataError(f"{path} is a color raster, expected P5")
    bad = (labels >= num_classes) & (labels != IGNORE_LABEL)
    if bad.any():
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DataError(
            f"{path}: label {int(labels[index])} at pixel {index} is not below {num_classes}",
            index=index,
        )
    return labels


def write_labels(path: PathLike, labels: np.ndarray) -> Path:
    return write_raster(path, labels.astype(np.uint8))


def colorize(labels: np.ndarray) -> np.ndarray:
    return PALETTE[labels.astype(np.uint8)]
