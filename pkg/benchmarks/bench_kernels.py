"""Timing comparison of the compiled warp kernel vs the numpy fallback.

Run: python3 benchmarks/bench_kernels.py [--sizes 512 1024 2048] [--reps 5]
"""

import argparse
import time

import numpy as np

from screendx.kernels import (BACKEND, HAVE_NATIVE, warp_bilinear,
                              warp_bilinear_numpy)


def make_case(size, seed=0):
    rng = np.random.default_rng(seed)
    src = rng.random((size, size, 1))
    # mild perspective: identity plus small off-diagonal terms
    h = np.array([[1.02, 0.03, -4.0],
                  [-0.02, 0.98, 6.0],
                  [1e-5, -2e-5, 1.0]])
    return src, np.linalg.inv(h)


def bench(fn, src, hinv, out_w, out_h, reps):
    fn(src, hinv, out_w, out_h)  # warm-up
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(src, hinv, out_w, out_h)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+",
                    default=[256, 512, 1024, 2048])
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()

    print(f"active backend: {BACKEND} (native built: {HAVE_NATIVE})")
    print(f"{'size':>6} {'numpy (ms)':>12} {'native (ms)':>12} "
          f"{'speedup':>8} {'bit-equal':>10}")
    for size in args.sizes:
        src, hinv = make_case(size)
        t_np = bench(warp_bilinear_numpy, src, hinv, size, size, args.reps)
        if HAVE_NATIVE:
            t_nat = bench(warp_bilinear, src, hinv, size, size, args.reps)
            same = np.array_equal(
                warp_bilinear(src, hinv, size, size),
                warp_bilinear_numpy(src, hinv, size, size))
            print(f"{size:>6} {t_np * 1e3:>12.2f} {t_nat * 1e3:>12.2f} "
                  f"{t_np / t_nat:>8.2f} {str(same):>10}")
        else:
            print(f"{size:>6} {t_np * 1e3:>12.2f} {'-':>12} {'-':>8} "
                  f"{'-':>10}")


if __name__ == "__main__":
    main()
