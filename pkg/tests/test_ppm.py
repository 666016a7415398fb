import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agedict.errors import DimensionError, FormatError
from agedict.ppm import ImageShape, decode, encode, load_image, quantize, save_image, shape_for


def test_decode_with_comments():
    data = b"P6\n# a comment\n2 1 # trailing\n255\n" + bytes([1, 2, 3, 4, 5, 6])
    raster, shape = decode(data)
    assert shape == ImageShape(2, 1, 3)
    assert raster.tolist() == [1, 2, 3, 4, 5, 6]


def test_grey():
    raster, shape = decode(b"P5 3 1 255\n" + bytes([0, 128, 255]))
    assert shape.channels == 1 and raster.tolist() == [0, 128, 255]


@pytest.mark.parametrize("data", [
    b"P3\n1 1\n255\n1 2 3",
    b"P6\n1 1\n65535\n" + bytes(6),
    b"P6\n2 2\n255\n" + bytes(5),
    b"P6\n2",
    b"P6\n0 2\n255\n",
    b"P6\nx 2\n255\n" + bytes(12),
])
def test_rejects(data):
    with pytest.raises(FormatError):
        decode(data)


def test_quantize_rounding():
    x = np.array([-0.2, 0.0, 0.5 / 255, 1.5 / 255, 0.5, 1.0, 7.0])
    assert quantize(x).tolist() == [0, 0, 1, 2, 128, 255, 255]


def test_save_load_save_identical(tmp_path, rng):
    shape = ImageShape(5, 3, 3)
    a, b = tmp_path / "a.ppm", tmp_path / "b.ppm"
    save_image(rng.uniform(-0.1, 1.1, shape.size), shape, a)
    x, s = load_image(a)
    assert s == shape
    save_image(x, s, b)
    assert a.read_bytes() == b.read_bytes()


def test_size_mismatch(tmp_path):
    with pytest.raises(DimensionError):
        save_image(np.zeros(5), ImageShape(2, 2, 1), tmp_path / "x.pgm")


@pytest.mark.parametrize("f", [64, 12, 7, 300, 1])
def test_shape_for(f):
    s = shape_for(f)
    assert s.size == f
    assert s.channels == (3 if f % 3 == 0 else 1)


@settings(max_examples=50, deadline=None)
@given(w=st.integers(1, 6), h=st.integers(1, 6), c=st.sampled_from([1, 3]), seed=st.integers(0, 10**6))
def test_encode_decode(w, h, c, seed):
    shape = ImageShape(w, h, c)
    raster = np.random.default_rng(seed).integers(0, 256, shape.size).astype(np.uint8)
    back, s = decode(encode(raster, shape))
    assert s == shape and np.array_equal(back, raster)


def test_half_grey_and_clamp(tmp_path):
    shape = ImageShape(3, 2, 3)
    path = tmp_path / "half.ppm"
    save_image(np.full(shape.size, 0.5), shape, path)
    assert path.read_bytes().endswith(bytes([128]) * shape.size)
    assert quantize([1.7, -3.0]).tolist() == [255, 0]
