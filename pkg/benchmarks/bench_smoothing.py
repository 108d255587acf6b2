#!/usr/bin/env python3
"""Compare the compiled and pure-Python smoothing kernels.

Usage: python benchmarks/bench_smoothing.py [--frames N]
"""

import argparse
import time

import numpy as np

from crowdgate.kernels import _pure

try:
    from crowdgate.kernels import _fast
except ImportError:
    _fast = None


def make_series(n, seed):
    """Piecewise-constant counts with 10% short +-3 spikes, like real jitter."""
    rng = np.random.default_rng(seed)
    values = np.repeat(rng.integers(0, 30, max(1, n // 150)), 150)[:n]
    values = np.resize(values, n).astype(np.int64)
    spikes = rng.random(n) < 0.1
    values[spikes] += rng.choice([-3, -2, -1, 1, 2, 3], spikes.sum())
    return np.maximum(values, 0)


def bench(kernel, values, half_length, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        kernel.smooth_counts(values, half_length, True)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--frames", type=int, default=1_000_000)
    parser.add_argument("--window", type=int, default=10)
    args = parser.parse_args()

    for n in (10_000, 100_000, args.frames):
        values = make_series(n, seed=0)
        t_pure = bench(_pure, values, args.window)
        line = f"{n:>10,} frames  pure {t_pure * 1e3:9.1f} ms"
        if _fast is not None:
            t_fast = bench(_fast, values, args.window)
            out_p, _ = _pure.smooth_counts(values, args.window, True)
            out_f, _ = _fast.smooth_counts(values, args.window, True)
            assert np.array_equal(out_p, out_f), "kernel outputs diverge"
            line += f"  compiled {t_fast * 1e3:8.1f} ms  speedup {t_pure / t_fast:6.1f}x"
        else:
            line += "  (compiled kernel not built)"
        print(line)


if __name__ == "__main__":
    main()
