"""Pure-numpy implementations of the hot kernels.

The compiled extension in ``_native.pyx`` mirrors these operations with the
same floating-point evaluation order, so both paths produce bit-identical
output. Keep the two in sync.
"""

import numpy as np

BACKEND = "numpy"

_W_EPS = 1e-12


def warp_bilinear(src, hinv, out_w, out_h, fill=0.0, u0=0, v0=0):
    """Inverse-map warp with bilinear sampling.

    src: (h, w, c) float64; hinv: 3x3 mapping output coords -> source coords.
    Output pixels whose source coordinate falls outside [0, w-1] x [0, h-1]
    (or whose homogeneous w is ~0) get the fill value.

    (u0, v0) offsets the output pixel coordinates: the result is the
    (out_h, out_w) window of the full warp whose top-left output pixel is
    (u0, v0), bit-identical to slicing the full-frame result (integer
    coordinate addition is exact).
    """
    h, w, c = src.shape
    u = np.arange(u0, u0 + out_w, dtype=np.float64)
    v = np.arange(v0, v0 + out_h, dtype=np.float64)
    U, V = np.meshgrid(u, v)

    X = (hinv[0, 0] * U + hinv[0, 1] * V) + hinv[0, 2]
    Y = (hinv[1, 0] * U + hinv[1, 1] * V) + hinv[1, 2]
    W = (hinv[2, 0] * U + hinv[2, 1] * V) + hinv[2, 2]

    ok_w = np.abs(W) >= _W_EPS
    Wsafe = np.where(ok_w, W, 1.0)
    x = X / Wsafe
    y = Y / Wsafe

    inb = ok_w & (x >= 0.0) & (x <= w - 1.0) & (y >= 0.0) & (y <= h - 1.0)
    xs = np.where(inb, x, 0.0)
    ys = np.where(inb, y, 0.0)

    ix = np.floor(xs)
    iy = np.floor(ys)
    fx = xs - ix
    fy = ys - iy
    ix = ix.astype(np.intp)
    iy = iy.astype(np.intp)
    ix1 = np.minimum(ix + 1, w - 1)
    iy1 = np.minimum(iy + 1, h - 1)

    out = np.empty((out_h, out_w, c), dtype=np.float64)
    omfx = 1.0 - fx
    omfy = 1.0 - fy
    for ch in range(c):
        plane = src[:, :, ch]
        g00 = plane[iy, ix]
        g01 = plane[iy, ix1]
        g10 = plane[iy1, ix]
        g11 = plane[iy1, ix1]
        top = g00 * omfx + g01 * fx
        bot = g10 * omfx + g11 * fx
        val = top * omfy + bot * fy
        out[:, :, ch] = np.where(inb, val, fill)
    return out
