#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy counterparts.

    python3 benchmarks/bench_kernels.py [--pixels N] [--repeat R]

Both paths live in the same process: the numba entry points are called
directly, so HSIMATURITY_DISABLE_NUMBA need not be set. The first numba call
is timed separately because it includes compilation (or a cache load).
"""

import argparse
import sys
import time

import numpy as np

from hsimaturity import _kernels
from hsimaturity._accel import HAVE_NUMBA


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def bench_fcls(n_pixels, m, bands, repeat):
    rng = np.random.default_rng(0)
    E = rng.random((m, bands))
    X = rng.dirichlet(np.ones(m), n_pixels) @ E + rng.normal(0, 0.05, (n_pixels, bands))
    G, H = E @ E.T, X @ E.T

    start = time.perf_counter()
    _kernels.fcls_batch_numba(G, H[:4])
    warm = time.perf_counter() - start
    t_numba, (p_numba, _) = best_of(lambda: _kernels.fcls_batch_numba(G, H), repeat)
    t_numpy, (p_numpy, _) = best_of(lambda: _kernels.fcls_batch_numpy(G, H), repeat)
    diff = float(np.max(np.abs(p_numba - p_numpy)))
    return f"fcls M={m}", n_pixels, warm, t_numba, t_numpy, diff


def bench_components(size, repeat):
    rng = np.random.default_rng(1)
    mask = rng.random((size, size)) < 0.55
    start = time.perf_counter()
    _kernels.component_roots_numba(mask[:8, :8])
    warm = time.perf_counter() - start
    t_numba, a = best_of(lambda: _kernels.component_roots_numba(mask), repeat)
    t_numpy, b = best_of(lambda: _kernels.component_roots_numpy(mask), repeat)
    return "components", size * size, warm, t_numba, t_numpy, float(np.any(a != b))


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--pixels", type=int, default=40_000)
    parser.add_argument("--bands", type=int, default=350)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if not HAVE_NUMBA:
        print("numba is not importable or HSIMATURITY_DISABLE_NUMBA is set; nothing to compare")
        return 1

    rows = [bench_fcls(args.pixels, m, args.bands, args.repeat) for m in (2, 3, 5)]
    rows.append(bench_components(int(np.sqrt(args.pixels * 4)), args.repeat))

    print(f"{'kernel':<12}{'items':>9}{'warmup s':>10}{'numba s':>10}{'numpy s':>10}"
          f"{'speedup':>9}{'max diff':>11}")
    for name, n, warm, tn, tp, diff in rows:
        print(f"{name:<12}{n:>9}{warm:>10.3f}{tn:>10.4f}{tp:>10.4f}{tp / tn:>8.1f}x{diff:>11.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
