import numpy as np
import pytest

from ctxseg.data.raster import (
    PALETTE,
    colorize,
    encode_raster,
    parse_raster,
    read_image,
    read_labels,
    write_image,
    write_labels,
)
from ctxseg.errors import DataError, RasterParseError


def test_white_pixel_bytes():
    white = np.full((1, 1, 3), 255, dtype=np.uint8)
    assert encode_raster(white) == b"P6\n1 1\n255\n\xff\xff\xff"


def test_grayscale_header():
    assert encode_raster(np.zeros((2, 3), dtype=np.uint8)).startswith(b"P5\n3 2\n255\n")


def test_parse_accepts_comments_and_whitespace():
    data = b"P5 # labels\n#another comment\n 2\t1 \n255\n\x01\x02"
    np.testing.assert_array_equal(parse_raster(data), [[1, 2]])


@pytest.mark.parametrize(
    "data,message",
    [
        (b"P3\n1 1\n255\n\x00\x00\x00", "magic"),
        (b"P5\n1 x\n255\n\x00", "decimal"),
        (b"P5\n1 1\n65535\n\x00\x00", "8-bit"),
        (b"P6\n2 2\n255\n\x00\x00", "truncated"),
        (b"P5\n1", "truncated header"),
    ],
)
def test_parse_errors(data, message):
    with pytest.raises(RasterParseError, match=message) as error:
        parse_raster(data)
    assert error.value.offset >= 0
    assert "at byte" in str(error.value)


def test_parse_error_points_at_bad_token():
    with pytest.raises(RasterParseError) as error:
        parse_raster(b"P5\n1 x\n255\n\x00")
    assert error.value.offset == 5


def test_palette_is_fixed():
    assert PALETTE.shape == (256, 3)
    assert PALETTE[0].tolist() == [0, 0, 0]
    assert PALETTE[1].tolist() == [128, 0, 0]
    assert PALETTE[2].tolist() == [0, 128, 0]
    labels = np.arange(256, dtype=np.uint8).reshape(16, 16)
    np.testing.assert_array_equal(colorize(labels).reshape(256, 3), PALETTE)


def test_image_and_label_files(tmp_path, rng):
    image = rng.integers(0, 256, size=(3, 4, 5)).astype(np.float32) / 255.0
    labels = rng.integers(0, 3, size=(4, 5)).astype(np.uint8)
    labels[0, 0] = 255
    write_image(tmp_path / "a.ppm", image)
    write_labels(tmp_path / "a.pgm", labels)
    np.testing.assert_allclose(read_image(tmp_path / "a.ppm"), image, atol=1e-7)
    np.testing.assert_array_equal(read_labels(tmp_path / "a.pgm", 3), labels)


def test_read_labels_rejects_large_values(tmp_path):
    labels = np.zeros((2, 2), dtype=np.uint8)
    labels[1, 0] = 9
    write_labels(tmp_path / "bad.pgm", labels)
    with pytest.raises(DataError) as error:
        read_labels(tmp_path / "bad.pgm", 4)
    assert error.value.index == (1, 0)


def test_wrong_raster_kind(tmp_path):
    write_labels(tmp_path / "gray.pgm", np.zeros((2, 2), dtype=np.uint8))
    with pytest.raises(DataError, match="P6"):
        read_image(tmp_path / "gray.pgm")
    with pytest.raises(DataError):
        encode_raster(np.zeros((2, 2), dtype=np.float32))
