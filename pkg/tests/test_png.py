"""PNG codec: bit-exact round trips, deterministic bytes, filter decoding
cross-checked against an independently constructed (per the PNG spec)
filtered stream."""

import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screendx import png


def quantize(arr, bits):
    peak = (1 << bits) - 1
    return np.round(arr * peak) / peak


@pytest.mark.parametrize("bits", [8, 16])
@pytest.mark.parametrize("channels", [1, 3])
def test_round_trip_bit_exact(bits, channels):
    rng = np.random.default_rng(0)
    arr = rng.random((13, 17, channels))
    out, got_bits = png.decode(png.encode(arr, bits=bits))
    assert got_bits == bits
    # the only loss is quantization at encode time
    assert np.array_equal(out, quantize(arr, bits))
    # a second trip is the identity
    out2, _ = png.decode(png.encode(out, bits=bits))
    assert np.array_equal(out2, out)


def test_encoding_is_byte_deterministic():
    rng = np.random.default_rng(1)
    arr = rng.random((9, 9, 1))
    assert png.encode(arr) == png.encode(arr.copy())


def test_levels_change_bytes_not_pixels():
    rng = np.random.default_rng(2)
    arr = rng.random((32, 32, 1))
    fast = png.encode(arr, bits=8, level=0)
    slow = png.encode(arr, bits=8, level=9)
    assert fast != slow
    assert np.array_equal(png.decode(fast)[0], png.decode(slow)[0])


def test_decode_raw_integer_values():
    arr = np.array([[[0.0], [1.0]], [[0.5], [0.25]]])
    raw, bits = png.decode_raw(png.encode(arr, bits=8))
    assert bits == 8
    assert raw.tolist() == [[[0], [255]], [[128], [64]]]


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        png.encode(np.zeros((4, 4, 1)), bits=12)
    with pytest.raises(ValueError):
        png.encode(np.zeros((4, 4, 2)))
    with pytest.raises(ValueError):
        png.decode(b"definitely not a png")


# --- independent construction of filtered PNGs (filters 1-4) -------------

def _chunk(tag, payload):
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF))


def _paeth(a, b, c):
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def build_filtered_png(pixels, filter_type):
    """Encode an 8-bit grayscale image using one filter type throughout,
    following the PNG 1.2 filter definitions independently of the codec."""
    h, w = pixels.shape
    prev = [0] * w
    scan = bytearray()
    for r in range(h):
        row = [int(v) for v in pixels[r]]
        scan.append(filter_type)
        filt = []
        for i in range(w):
            a = row[i - 1] if i >= 1 else 0
            b = prev[i]
            c = prev[i - 1] if i >= 1 else 0
            if filter_type == 0:
                f = row[i]
            elif filter_type == 1:
                f = (row[i] - a) & 0xFF
            elif filter_type == 2:
                f = (row[i] - b) & 0xFF
            elif filter_type == 3:
                f = (row[i] - ((a + b) >> 1)) & 0xFF
            else:
                f = (row[i] - _paeth(a, b, c)) & 0xFF
            filt.append(f)
        scan.extend(filt)
        prev = row
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + _chunk(b"IHDR", ihdr)
            + _chunk(b"IDAT", zlib.compress(bytes(scan)))
            + _chunk(b"IEND", b""))


@pytest.mark.parametrize("filter_type", [0, 1, 2, 3, 4])
def test_decodes_every_filter_type(filter_type):
    rng = np.random.default_rng(filter_type)
    pixels = rng.integers(0, 256, size=(11, 7), dtype=np.uint8)
    data = build_filtered_png(pixels, filter_type)
    raw, bits = png.decode_raw(data)
    assert bits == 8
    assert np.array_equal(raw[:, :, 0], pixels)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 12), st.integers(1, 12))
def test_round_trip_property(seed, h, w):
    rng = np.random.default_rng(seed)
    arr = rng.random((h, w, 1))
    out, _ = png.decode(png.encode(arr, bits=16))
    assert np.array_equal(out, quantize(arr, 16))
