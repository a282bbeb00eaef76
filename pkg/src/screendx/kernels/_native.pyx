# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled warp kernel. Mirrors kernels._numpy bit-for-bit; the build
disables FP contraction so the scalar arithmetic matches numpy's
elementwise evaluation order exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs

cnp.import_array()

BACKEND = "native"

cdef double _W_EPS = 1e-12


def warp_bilinear(cnp.ndarray[cnp.float64_t, ndim=3] src,
                  cnp.ndarray[cnp.float64_t, ndim=2] hinv,
                  int out_w, int out_h, double fill=0.0,
                  int u0=0, int v0=0):
    cdef int h = src.shape[0]
    cdef int w = src.shape[1]
    cdef int c = src.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.empty(
        (out_h, out_w, c), dtype=np.float64)
    cdef double h00 = hinv[0, 0], h01 = hinv[0, 1], h02 = hinv[0, 2]
    cdef double h10 = hinv[1, 0], h11 = hinv[1, 1], h12 = hinv[1, 2]
    cdef double h20 = hinv[2, 0], h21 = hinv[2, 1], h22 = hinv[2, 2]
    cdef int u, v, ch, ix, iy, ix1, iy1
    cdef double du, dv, X, Y, W, x, y, fx, fy, omfx, omfy
    cdef double g00, g01, g10, g11, top, bot
    cdef double xr, yr, wr, wmax, hmax
    cdef bint okw
    # per-row scratch: a branchless coordinate pass the compiler can
    # vectorize (IEEE mul/add/div are correctly rounded in SIMD, so the
    # bits match the scalar evaluation), then a scalar sampling pass
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xbuf = np.empty(out_w)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ybuf = np.empty(out_w)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] inb = np.empty(out_w,
                                                         dtype=np.uint8)
    wmax = w - 1.0
    hmax = h - 1.0

    for v in range(out_h):
        dv = <double>(v + v0)
        # row-constant products; same value and rounding as computing
        # them per pixel, so the per-pixel sums keep identical bits
        xr = h01 * dv
        yr = h11 * dv
        wr = h21 * dv
        for u in range(out_w):
            du = <double>(u + u0)
            X = (h00 * du + xr) + h02
            Y = (h10 * du + yr) + h12
            W = (h20 * du + wr) + h22
            # substitute 1.0 for degenerate W instead of branching; the
            # x/y values are only consumed where inb is set
            okw = fabs(W) >= _W_EPS
            W = W if okw else 1.0
            x = X / W
            y = Y / W
            inb[u] = (okw and x >= 0.0 and x <= wmax
                      and y >= 0.0 and y <= hmax)
            xbuf[u] = x
            ybuf[u] = y
        for u in range(out_w):
            if inb[u] == 0:
                for ch in range(c):
                    out[v, u, ch] = fill
                continue
            x = xbuf[u]
            y = ybuf[u]
            fx = floor(x)
            fy = floor(y)
            ix = <int>fx
            iy = <int>fy
            fx = x - fx
            fy = y - fy
            ix1 = ix + 1
            if ix1 > w - 1:
                ix1 = w - 1
            iy1 = iy + 1
            if iy1 > h - 1:
                iy1 = h - 1
            omfx = 1.0 - fx
            omfy = 1.0 - fy
            for ch in range(c):
                g00 = src[iy, ix, ch]
                g01 = src[iy, ix1, ch]
                g10 = src[iy1, ix, ch]
                g11 = src[iy1, ix1, ch]
                top = g00 * omfx + g01 * fx
                bot = g10 * omfx + g11 * fx
                out[v, u, ch] = top * omfy + bot * fy
    return out
