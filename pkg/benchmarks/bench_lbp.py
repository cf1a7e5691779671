#!/usr/bin/env python3
"""Benchmark the riu2 LBP kernel: numba JIT vs the pure-numpy fallback.

The two paths produce bit-identical code maps; this script verifies that and
reports per-plane timings for the shipped parameter grid. The fallback is
what you get with LIVETEX_NUMBA=0 (or without numba installed).

Usage: python benchmarks/bench_lbp.py [--size 512] [--repeat 5]
"""

import argparse
import time

import numpy as np

from livetex.lbp import LbpParams, apply_riu2

GRID = [(8, 1.0), (8, 2.0), (16, 2.0), (32, 8.0), (64, 8.0)]


def time_backend(plane, params, backend, repeat):
    apply_riu2(plane, params, backend=backend)  # warm-up / JIT compile
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        apply_riu2(plane, params, backend=backend)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=512)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    plane = rng.integers(0, 256, (args.size, args.size), dtype=np.uint8)

    print(f"plane {args.size}x{args.size}, best of {args.repeat}")
    print(f"{'P':>4} {'R':>5} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}  equal")
    for points, radius in GRID:
        params = LbpParams(points, radius)
        jit = time_backend(plane, params, "numba", args.repeat)
        plain = time_backend(plane, params, "numpy", args.repeat)
        same = np.array_equal(
            apply_riu2(plane, params, backend="numba").codes,
            apply_riu2(plane, params, backend="numpy").codes,
        )
        print(
            f"{points:>4} {radius:>5.1f} {jit * 1e3:>10.2f} {plain * 1e3:>10.2f} "
            f"{plain / jit:>7.1f}x  {same}"
        )
        if not same:
            raise SystemExit("backend mismatch")


if __name__ == "__main__":
    main()
