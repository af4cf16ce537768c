"""Timing comparison of the compiled kernels against the numpy fallback.

Runs the two hot kernels (squared-distance matrix, nearest-centroid assign)
at a few sizes, checks both backends agree bitwise on the same inputs, and
prints a small table. Usage:

    python3 benchmarks/bench_kernels.py [--repeats N] [--seed S]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from routekit import kernels
from routekit.kernels import _numpy

try:
    from routekit.kernels import _core
except ImportError:
    _core = None

SIZES = [
    (200, 8, 16),
    (2000, 16, 64),
    (5000, 32, 128),
]


def _time(fn, *args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(f"active backend: {kernels.BACKEND}")
    if _core is None:
        print("compiled extension not importable; timing the numpy backend only")

    rng = np.random.Generator(np.random.PCG64(args.seed))
    header = f"{'n x k x d':>16} {'kernel':>18} {'numpy (ms)':>12} {'compiled (ms)':>14} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for n, k, d in SIZES:
        x = rng.standard_normal((n, d))
        c = rng.standard_normal((k, d))
        cases = [
            ("pairwise_sq_dists", _numpy.pairwise_sq_dists, getattr(_core, "pairwise_sq_dists", None)),
            ("nearest_centroid", _numpy.nearest_centroid, getattr(_core, "nearest_centroid", None)),
        ]
        for name, np_fn, c_fn in cases:
            t_np = _time(np_fn, x, c, repeats=args.repeats)
            if c_fn is None:
                print(f"{f'{n}x{k}x{d}':>16} {name:>18} {t_np * 1e3:>12.3f} {'-':>14} {'-':>8}")
                continue
            a = np_fn(x, c)
            b = c_fn(x, c)
            if not np.array_equal(np.asarray(a), np.asarray(b)):
                raise AssertionError(f"backend mismatch in {name} at n={n}, k={k}, d={d}")
            t_c = _time(c_fn, x, c, repeats=args.repeats)
            print(
                f"{f'{n}x{k}x{d}':>16} {name:>18} {t_np * 1e3:>12.3f} {t_c * 1e3:>14.3f} "
                f"{t_np / t_c:>7.2f}x"
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
