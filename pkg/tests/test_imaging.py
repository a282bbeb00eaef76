"""Geometry and raster primitives. The homography estimator is checked
against an independent exact oracle (Fraction-arithmetic Gaussian
elimination of the same 8x8 DLT system — no floating point at all)."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screendx.errors import (AtInfinity, DegenerateConfiguration,
                             NonConvexInput, OutOfBounds)
from screendx.imaging import (BoundingBox, Homography, ImageBuffer, Point2,
                              Quadrilateral, apply_homography,
                              bilinear_sample, crop, estimate_homography,
                              order_quad_corners, resize_bilinear,
                              to_grayscale, warp_perspective)


# --- exact-rational homography oracle -------------------------------------

def solve_exact(A, b):
    """Gaussian elimination with partial pivoting over Fractions."""
    n = len(b)
    M = [[Fraction(A[i][j]) for j in range(n)] + [Fraction(b[i])]
         for i in range(n)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(M[r][col]))
        if M[piv][col] == 0:
            raise ZeroDivisionError("singular system")
        M[col], M[piv] = M[piv], M[col]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col] / M[col][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    return [M[i][n] / M[i][i] for i in range(n)]


def homography_oracle(src, dst):
    """Exact rational solve of the standard 4-point DLT system."""
    A, b = [], []
    for (sx, sy), (dx, dy) in zip(src, dst):
        sx, sy = Fraction(sx), Fraction(sy)
        dx, dy = Fraction(dx), Fraction(dy)
        A.append([sx, sy, 1, 0, 0, 0, -dx * sx, -dx * sy])
        A.append([0, 0, 0, sx, sy, 1, -dy * sx, -dy * sy])
        b += [dx, dy]
    sol = solve_exact(A, b)
    return np.array([float(v) for v in sol] + [1.0]).reshape(3, 3)


def rational_quads(seed, n=40):
    """Random convex source/destination quads with rational coordinates."""
    rng = np.random.default_rng(seed)
    cases = []
    while len(cases) < n:
        # jittered unit square corners keep the quads convex
        base = [(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (0.0, 100.0)]
        jit = rng.integers(-15, 16, size=(2, 4, 2)) / 2.0
        src = [(x + jit[0, i, 0], y + jit[0, i, 1])
               for i, (x, y) in enumerate(base)]
        dst = [(x + jit[1, i, 0], y + jit[1, i, 1])
               for i, (x, y) in enumerate(base)]
        try:
            cases.append((src, dst, homography_oracle(src, dst)))
        except ZeroDivisionError:
            continue
    return cases


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_estimate_homography_matches_exact_oracle(seed):
    for src, dst, expected in rational_quads(seed):
        h = estimate_homography([Point2(*p) for p in src],
                                [Point2(*p) for p in dst])
        assert np.allclose(h.m, expected, atol=1e-9, rtol=1e-9)


def test_estimate_homography_reprojects_exactly():
    src = [Point2(0, 0), Point2(639, 0), Point2(639, 479), Point2(0, 479)]
    dst = [Point2(12.5, 30.25), Point2(610.0, 8.0),
           Point2(590.75, 450.5), Point2(40.0, 470.0)]
    h = estimate_homography(src, dst)
    for s, d in zip(src, dst):
        p = apply_homography(h, s)
        assert abs(p.x - d.x) < 1e-9 and abs(p.y - d.y) < 1e-9


def test_estimate_homography_rejects_collinear():
    src = [Point2(0, 0), Point2(1, 1), Point2(2, 2), Point2(0, 5)]
    dst = [Point2(0, 0), Point2(1, 0), Point2(1, 1), Point2(0, 1)]
    with pytest.raises(DegenerateConfiguration):
        estimate_homography(src, dst)


def test_homography_normalization_and_inverse():
    m = np.array([[2.0, 0.0, 4.0], [0.0, 2.0, 6.0], [0.0, 0.0, 2.0]])
    h = Homography(m)
    assert h.m[2, 2] == 1.0
    comp = h.compose(h.inverse())
    assert np.allclose(comp.m, np.eye(3), atol=1e-12)


def test_apply_homography_at_infinity():
    h = Homography(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
                             [1.0, 0.0, 1.0]]))
    with pytest.raises(AtInfinity):
        apply_homography(h, Point2(-1.0, 5.0))


# --- quadrilateral / corner ordering ---------------------------------------

def test_order_quad_corners_canonical():
    pts = [Point2(90, 10), Point2(10, 12), Point2(12, 80), Point2(88, 82)]
    q = order_quad_corners(pts)
    xs = [p.x for p in q.corners]
    ys = [p.y for p in q.corners]
    assert xs == [10, 90, 88, 12]
    assert ys == [12, 10, 82, 80]


def test_order_quad_corners_rotation_invariant():
    pts = [Point2(0, 0), Point2(10, 1), Point2(11, 9), Point2(-1, 10)]
    base = order_quad_corners(pts).flat()
    for k in range(1, 4):
        rolled = pts[k:] + pts[:k]
        assert order_quad_corners(rolled).flat() == base


def test_quadrilateral_rejects_nonconvex():
    with pytest.raises(NonConvexInput):
        Quadrilateral((Point2(0, 0), Point2(10, 0), Point2(2, 2),
                       Point2(0, 10)))
    with pytest.raises(NonConvexInput):  # coincident
        Quadrilateral((Point2(0, 0), Point2(0, 0), Point2(1, 1),
                       Point2(0, 1)))


# --- raster primitives -----------------------------------------------------

def test_image_buffer_validation():
    with pytest.raises(ValueError):
        ImageBuffer(np.full((4, 4, 1), 1.5))
    with pytest.raises(ValueError):
        ImageBuffer(np.full((4, 4, 2), 0.5))
    with pytest.raises(ValueError):
        ImageBuffer(np.full((4, 4, 1), np.nan))
    img = ImageBuffer(np.zeros((4, 5)))
    assert (img.height, img.width, img.channels) == (4, 5, 1)
    assert not img.data.flags.writeable


def test_bilinear_sample_exact_and_fill():
    img = ImageBuffer(np.array([[[0.0], [1.0]], [[1.0], [0.0]]]))
    assert bilinear_sample(img, 0.5, 0.5)[0] == pytest.approx(0.5)
    assert bilinear_sample(img, 0, 0)[0] == 0.0
    assert bilinear_sample(img, -1, 0, fill=0.7)[0] == 0.7
    assert bilinear_sample(img, 0, 99)[0] == 0.0


def test_to_grayscale_luminance():
    rgb = ImageBuffer(np.full((3, 3, 3), 0.0) + np.array([1.0, 0.0, 0.0]))
    assert np.allclose(to_grayscale(rgb).data, 0.299)
    gray = ImageBuffer(np.full((3, 3, 1), 0.4))
    assert to_grayscale(gray) is gray


def test_crop_exact_and_bounds():
    rng = np.random.default_rng(5)
    img = ImageBuffer(rng.random((10, 12, 1)))
    box = BoundingBox(3, 2, 5, 6)
    assert np.array_equal(crop(img, box).data, img.data[2:8, 3:8])
    with pytest.raises(OutOfBounds):
        crop(img, BoundingBox(9, 0, 5, 5))
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 0, 5)


def test_bbox_iou():
    a = BoundingBox(0, 0, 10, 10)
    assert a.iou(BoundingBox(0, 0, 10, 10)) == 1.0
    assert a.iou(BoundingBox(10, 10, 5, 5)) == 0.0
    assert a.iou(BoundingBox(5, 0, 10, 10)) == pytest.approx(50 / 150)


def test_resize_identity_and_constant():
    rng = np.random.default_rng(6)
    img = ImageBuffer(rng.random((16, 16, 1)))
    assert np.array_equal(resize_bilinear(img, 16, 16).data, img.data)
    flat = ImageBuffer(np.full((40, 40, 1), 0.3))
    out = resize_bilinear(flat, 7, 13)
    assert np.allclose(out.data, 0.3, atol=1e-12)
    assert (out.width, out.height) == (7, 13)


def test_warp_identity_round_trip():
    rng = np.random.default_rng(7)
    img = ImageBuffer(rng.random((24, 24, 1)))
    out = warp_perspective(img, Homography.identity(), 24, 24)
    assert np.array_equal(out.data, img.data)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_homography_round_trip_property(seed):
    """h followed by h^-1 returns every quad corner (within float noise)."""
    rng = np.random.default_rng(seed)
    src = [Point2(0, 0), Point2(64, 0), Point2(64, 48), Point2(0, 48)]
    dst = [Point2(float(p.x + rng.uniform(-5, 5)),
                  float(p.y + rng.uniform(-5, 5))) for p in src]
    try:
        h = estimate_homography(src, dst)
    except DegenerateConfiguration:
        return
    hinv = h.inverse()
    for s in src:
        back = apply_homography(hinv, apply_homography(h, s))
        assert abs(back.x - s.x) < 1e-6 and abs(back.y - s.y) < 1e-6
