"""Timing comparison of the numba kernels against their numpy fallbacks.

Run: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from attwarp import _kernels

rng = np.random.default_rng(7)


def best_of(fn, repeats):
    fn()  # warm (jit compile / cache touch)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba not importable; nothing to compare")

    img = rng.random((512, 512, 3))
    fx = np.sort(rng.uniform(0, 511, 512))
    fy = np.sort(rng.uniform(0, 511, 512))
    grid = rng.random((24, 24))
    flat = rng.random((512, 512))

    cases = [
        ("bilinear_warp 512x512x3",
         lambda: _kernels.bilinear_warp_numpy(img, fx, fy),
         lambda: _kernels.bilinear_warp_numba(img, fx, fy)),
        ("lanczos_resize 24->512",
         lambda: _kernels.lanczos_resize_numpy(grid, 512, 512),
         lambda: _kernels.lanczos_resize_numba(grid, 512, 512)),
        ("lanczos_resize 512->336",
         lambda: _kernels.lanczos_resize_numpy(flat, 336, 336),
         lambda: _kernels.lanczos_resize_numba(flat, 336, 336)),
        ("box_smooth 512x512 k=5",
         lambda: _kernels.box_smooth_numpy(flat, 5),
         lambda: _kernels.box_smooth_numba(flat, 5)),
    ]

    print(f"{'kernel':<26} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, f_np, f_nb in cases:
        ref = f_np()
        got = f_nb()
        assert np.allclose(ref, got, atol=1e-10), f"{name}: backends disagree"
        t_np = best_of(f_np, args.repeats)
        t_nb = best_of(f_nb, args.repeats)
        print(f"{name:<26} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
