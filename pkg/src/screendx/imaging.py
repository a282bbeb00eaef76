"""Raster and projective-geometry primitives shared by all pipeline stages.

Images are planar rasters of unit-interval float64 intensities, row-major
and channel-interleaved. All types are immutable after construction and all
operations are pure.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels, png
from .errors import (AtInfinity, DegenerateConfiguration, DimensionMismatch,
                     NonConvexInput, OutOfBounds)

__all__ = [
    "ImageBuffer", "Point2", "Quadrilateral", "BoundingBox", "Homography",
    "bilinear_sample", "estimate_homography", "apply_homography",
    "warp_perspective", "order_quad_corners", "to_grayscale",
    "resize_bilinear", "read_png", "write_png", "crop",
]


@dataclass(frozen=True)
class ImageBuffer:
    """(height, width, channels) float64 array with intensities in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError("image data must be 2-D or 3-D")
        h, w, c = arr.shape
        if h < 1 or w < 1:
            raise ValueError("image dimensions must be >= 1")
        if c not in (1, 3):
            raise ValueError("channels must be 1 (gray) or 3 (RGB)")
        if not np.isfinite(arr).all():
            raise ValueError("image intensities must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image intensities must lie in [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    @classmethod
    def full(cls, width, height, value=0.0, channels=1):
        return cls(np.full((height, width, channels), float(value)))


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError("point coordinates must be finite")

    def as_array(self):
        return np.array([self.x, self.y], dtype=np.float64)


def _signed_area(pts):
    s = 0.0
    n = len(pts)
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        s += a.x * b.y - b.x * a.y
    return 0.5 * s


@dataclass(frozen=True)
class Quadrilateral:
    """Four corners ordered top-left, top-right, bottom-right, bottom-left."""

    corners: tuple

    def __post_init__(self):
        corners = tuple(self.corners)
        if len(corners) != 4:
            raise ValueError("quadrilateral needs exactly 4 corners")
        for i in range(4):
            for j in range(i + 1, 4):
                if (corners[i].x == corners[j].x
                        and corners[i].y == corners[j].y):
                    raise NonConvexInput("coincident corners")
        if not _is_convex(corners):
            raise NonConvexInput("corners do not form a convex quadrilateral")
        if _signed_area(corners) <= 0:
            raise NonConvexInput("corner ordering has non-positive area")
        object.__setattr__(self, "corners", corners)

    def as_array(self):
        return np.array([[p.x, p.y] for p in self.corners], dtype=np.float64)

    def flat(self):
        return [v for p in self.corners for v in (p.x, p.y)]


def _is_convex(corners):
    sign = 0
    for i in range(4):
        a = corners[i]
        b = corners[(i + 1) % 4]
        c = corners[(i + 2) % 4]
        cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x)
        if cross == 0:
            return False
        s = 1 if cross > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return True


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("bounding box must have positive size")

    def within(self, img):
        return (self.x >= 0 and self.y >= 0
                and self.x + self.w <= img.width
                and self.y + self.h <= img.height)

    def iou(self, other):
        ix = max(self.x, other.x)
        iy = max(self.y, other.y)
        ix2 = min(self.x + self.w, other.x + other.w)
        iy2 = min(self.y + self.h, other.y + other.h)
        inter = max(0, ix2 - ix) * max(0, iy2 - iy)
        union = self.w * self.h + other.w * other.h - inter
        return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform, normalized for canonical comparison."""

    m: np.ndarray = field()

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError("homography matrix must be 3x3")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        else:
            m = m / np.linalg.norm(m)
        if abs(np.linalg.det(m)) <= 1e-12:
            raise DegenerateConfiguration("homography is singular")
        m = np.ascontiguousarray(m)
        m.flags.writeable = False
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    def inverse(self):
        return Homography(np.linalg.inv(self.m))

    def compose(self, other):
        """Returns self . other (apply `other` first)."""
        return Homography(self.m @ other.m)

    def flat(self):
        return [float(v) for v in self.m.reshape(-1)]


def bilinear_sample(img, x, y, fill=0.0):
    """Bilinear interpolation at (x, y); fill outside [0,w-1] x [0,h-1].

    Returns a length-`channels` float64 array. Total function: never raises.
    """
    h, w = img.height, img.width
    if not (np.isfinite(x) and np.isfinite(y)
            and 0.0 <= x <= w - 1.0 and 0.0 <= y <= h - 1.0):
        return np.full(img.channels, float(fill))
    ix = int(np.floor(x))
    iy = int(np.floor(y))
    fx = x - ix
    fy = y - iy
    ix1 = min(ix + 1, w - 1)
    iy1 = min(iy + 1, h - 1)
    d = img.data
    top = d[iy, ix] * (1.0 - fx) + d[iy, ix1] * fx
    bot = d[iy1, ix] * (1.0 - fx) + d[iy1, ix1] * fx
    return top * (1.0 - fy) + bot * fy


def _collinear_triple(pts, tol=1e-9):
    scale = max(1.0, max(abs(p.x) for p in pts), max(abs(p.y) for p in pts))
    for i in range(4):
        for j in range(i + 1, 4):
            for k in range(j + 1, 4):
                a, b, c = pts[i], pts[j], pts[k]
                cross = ((b.x - a.x) * (c.y - a.y)
                         - (b.y - a.y) * (c.x - a.x))
                if abs(cross) < tol * scale * scale:
                    return True
    return False


def estimate_homography(src, dst):
    """Exact 4-point direct linear transform (8x8 system).

    Maps src[i] -> dst[i] with reprojection error < 1e-9.
    """
    src = list(src)
    dst = list(dst)
    if len(src) != 4 or len(dst) != 4:
        raise ValueError("exactly 4 correspondences required")
    if _collinear_triple(src) or _collinear_triple(dst):
        raise DegenerateConfiguration("three correspondences are collinear")
    A = np.zeros((8, 8))
    b = np.zeros(8)
    for i, (s, d) in enumerate(zip(src, dst)):
        A[2 * i] = [s.x, s.y, 1, 0, 0, 0, -d.x * s.x, -d.x * s.y]
        A[2 * i + 1] = [0, 0, 0, s.x, s.y, 1, -d.y * s.x, -d.y * s.y]
        b[2 * i] = d.x
        b[2 * i + 1] = d.y
    try:
        sol = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as e:
        raise DegenerateConfiguration(str(e)) from e
    m = np.append(sol, 1.0).reshape(3, 3)
    h = Homography(m)
    for s, d in zip(src, dst):
        p = apply_homography(h, s)
        if abs(p.x - d.x) > 1e-9 or abs(p.y - d.y) > 1e-9:
            raise DegenerateConfiguration("DLT solution failed to reproject")
    return h


def apply_homography(h, p):
    v = h.m @ np.array([p.x, p.y, 1.0])
    if abs(v[2]) < 1e-12:
        raise AtInfinity(f"point {p} maps to infinity")
    return Point2(v[0] / v[2], v[1] / v[2])


def warp_perspective(img, h, out_w, out_h, fill=0.0, roi=None):
    """out(u, v) = bilinear_sample(img, h^-1 (u, v)); dims (out_w, out_h).

    roi=(x0, y0, x1, y1) restricts computation to that output window; the
    caller asserts every pixel outside it would be fill (e.g. the window
    bounds the source image's projected quad). The computed window is
    bit-identical to the same window of the full warp.
    """
    hinv = h.inverse().m
    if roi is None:
        out = kernels.warp_bilinear(img.data, hinv, out_w, out_h, fill)
        return ImageBuffer(np.clip(out, 0.0, 1.0))
    x0, y0, x1, y1 = roi
    if not (0 <= x0 < x1 <= out_w and 0 <= y0 < y1 <= out_h):
        raise ValueError(f"roi {roi} exceeds {out_w}x{out_h}")
    sub = kernels.warp_bilinear(img.data, hinv, x1 - x0, y1 - y0, fill,
                                u0=x0, v0=y0)
    out = np.full((out_h, out_w, img.data.shape[2]),
                  min(max(fill, 0.0), 1.0), dtype=np.float64)
    out[y0:y1, x0:x1] = np.clip(sub, 0.0, 1.0)
    return ImageBuffer(out)


def order_quad_corners(pts):
    """Canonicalize 4 convex points to TL, TR, BR, BL order.

    TL is the corner minimizing x + y; the rest follow by angle about the
    centroid (clockwise in image coordinates, y down).
    """
    pts = list(pts)
    if len(pts) != 4:
        raise ValueError("need exactly 4 points")
    cx = sum(p.x for p in pts) / 4.0
    cy = sum(p.y for p in pts) / 4.0
    ordered = sorted(pts, key=lambda p: np.arctan2(p.y - cy, p.x - cx))
    tl_idx = min(range(4), key=lambda i: (ordered[i].x + ordered[i].y,
                                          ordered[i].y))
    ordered = ordered[tl_idx:] + ordered[:tl_idx]
    return Quadrilateral(tuple(ordered))  # raises NonConvexInput if invalid


def to_grayscale(img):
    """Luminance 0.299 R + 0.587 G + 0.114 B; identity on grayscale input."""
    if img.channels == 1:
        return img
    d = img.data
    lum = 0.299 * d[:, :, 0] + 0.587 * d[:, :, 1] + 0.114 * d[:, :, 2]
    return ImageBuffer(np.clip(lum, 0.0, 1.0))


def crop(img, bbox):
    """Exact sub-rectangle copy."""
    if not bbox.within(img):
        raise OutOfBounds(f"{bbox} exceeds {img.width}x{img.height}")
    return ImageBuffer(img.data[bbox.y:bbox.y + bbox.h,
                                bbox.x:bbox.x + bbox.w].copy())


def resize_bilinear(img, out_w, out_h):
    """Bilinear resize with box prefiltering when shrinking by more than 2x.

    Sampling is edge-clamped (no fill border).
    """
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    d = img.data
    h, w = img.height, img.width
    fx = w / out_w
    fy = h / out_h
    # area prefilter: integer block average before the bilinear pass
    f = int(min(fx, fy) // 2)
    if f >= 2:
        th, tw = (h // f) * f, (w // f) * f
        d = d[:th, :tw].reshape(th // f, f, tw // f, f, img.channels)
        d = d.mean(axis=(1, 3))
        h, w = d.shape[:2]
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    ix = np.floor(xs).astype(np.intp)
    iy = np.floor(ys).astype(np.intp)
    tx = xs - ix
    ty = ys - iy
    ix1 = np.minimum(ix + 1, w - 1)
    iy1 = np.minimum(iy + 1, h - 1)
    top = (d[iy][:, ix] * (1 - tx)[None, :, None]
           + d[iy][:, ix1] * tx[None, :, None])
    bot = (d[iy1][:, ix] * (1 - tx)[None, :, None]
           + d[iy1][:, ix1] * tx[None, :, None])
    out = top * (1 - ty)[:, None, None] + bot * ty[:, None, None]
    return ImageBuffer(np.clip(out, 0.0, 1.0))


# ---------------------------------------------------------------------------
# PNG I/O: 8/16-bit, scaled to [0,1] by (2^bits - 1). Round trips at matching
# bit depth are bit-exact; encoding is byte-deterministic (see png module).

def write_png(img, path, bits=16, level=6):
    with open(str(path), "wb") as f:
        f.write(png.encode(img.data, bits=bits, level=level))


def read_png(path):
    with open(str(path), "rb") as f:
        arr, _bits = png.decode(f.read())
    return ImageBuffer(arr)


def encode_png(img, bits=16):
    return png.encode(img.data, bits=bits)


def decode_png(data):
    arr, _bits = png.decode(data)
    return ImageBuffer(arr)
