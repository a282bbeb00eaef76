"""Cross-path equivalence of the compiled warp kernel and the numpy
fallback: identical bits for identical inputs."""

import numpy as np
import pytest

from screendx.kernels import (BACKEND, HAVE_NATIVE, warp_bilinear,
                              warp_bilinear_numpy)

needs_native = pytest.mark.skipif(not HAVE_NATIVE,
                                  reason="compiled extension not built")


def random_case(seed, size=64, channels=1):
    rng = np.random.default_rng(seed)
    src = rng.random((size, size, channels))
    h = np.eye(3)
    h[:2, :2] += 0.05 * rng.standard_normal((2, 2))
    h[:2, 2] = rng.uniform(-5, 5, 2)
    h[2, :2] = 1e-4 * rng.standard_normal(2)
    return src, np.linalg.inv(h)


def test_native_backend_is_built():
    # the build contract requires the compiled core to be available here
    assert HAVE_NATIVE
    assert BACKEND == "native"


@needs_native
@pytest.mark.parametrize("seed", range(20))
def test_bit_equal_random_homographies(seed):
    src, hinv = random_case(seed)
    a = warp_bilinear(src, hinv, 48, 40)
    b = warp_bilinear_numpy(src, hinv, 48, 40)
    assert a.shape == b.shape == (40, 48, 1)
    assert np.array_equal(a, b)  # bitwise, not approximate


@needs_native
def test_bit_equal_rgb_and_fill():
    src, hinv = random_case(7, channels=3)
    a = warp_bilinear(src, hinv, 80, 80, fill=0.5)
    b = warp_bilinear_numpy(src, hinv, 80, 80, fill=0.5)
    assert np.array_equal(a, b)


def test_identity_warp_is_exact():
    rng = np.random.default_rng(3)
    src = rng.random((32, 32, 1))
    out = warp_bilinear_numpy(src, np.eye(3), 32, 32)
    assert np.array_equal(out, src)


def test_out_of_frame_uses_fill():
    src = np.ones((16, 16, 1))
    # translate far outside the source
    hinv = np.array([[1.0, 0.0, 1000.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    out = warp_bilinear_numpy(src, hinv, 8, 8, fill=0.25)
    assert np.all(out == 0.25)


@needs_native
def test_native_out_of_frame_matches_fallback():
    src = np.ones((16, 16, 1))
    hinv = np.array([[1.0, 0.0, 1000.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    assert np.array_equal(warp_bilinear(src, hinv, 8, 8, fill=0.25),
                          warp_bilinear_numpy(src, hinv, 8, 8, fill=0.25))


@pytest.mark.parametrize("seed", range(5))
def test_roi_offset_matches_full_frame_slice(seed):
    # the (u0, v0) window must be bitwise-equal to slicing the full warp
    src, hinv = random_case(seed, size=80, channels=1)
    full = warp_bilinear_numpy(src, hinv, 100, 70, fill=0.25)
    sub_np = warp_bilinear_numpy(src, hinv, 40, 30, fill=0.25, u0=13, v0=7)
    assert np.array_equal(sub_np, full[7:37, 13:53])
    if HAVE_NATIVE:
        sub_nat = warp_bilinear(src, hinv, 40, 30, fill=0.25, u0=13, v0=7)
        assert np.array_equal(sub_nat, full[7:37, 13:53])
