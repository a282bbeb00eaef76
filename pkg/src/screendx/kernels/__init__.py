"""Hot-kernel dispatch: compiled extension when available, numpy otherwise.

Both backends are kept bit-identical; see benchmarks/bench_kernels.py for
the speed comparison and tests/test_kernels.py for the equivalence check.
"""

from . import _numpy as _fallback

try:
    from . import _native as _impl
    HAVE_NATIVE = True
except ImportError:  # extension not built
    _impl = _fallback
    HAVE_NATIVE = False

BACKEND = _impl.BACKEND


def warp_bilinear(src, hinv, out_w, out_h, fill=0.0, u0=0, v0=0):
    return _impl.warp_bilinear(src, hinv, int(out_w), int(out_h), float(fill),
                               int(u0), int(v0))


def warp_bilinear_numpy(src, hinv, out_w, out_h, fill=0.0, u0=0, v0=0):
    """Always the pure-numpy path (for cross-checks and benchmarks)."""
    return _fallback.warp_bilinear(src, hinv, int(out_w), int(out_h),
                                   float(fill), int(u0), int(v0))
