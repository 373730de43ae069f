#!/usr/bin/env python3
"""Benchmark the compiled Gram core against the numpy fallback.

Usage: python benchmarks/bench_gram.py [N ...]

Run with CAUSALSTATES_NO_EXT=1 to confirm which backend is active; this
script instead swaps the backend in-process and reports both, plus the
worst entrywise disagreement between them.
"""

import sys
import time

import numpy as np

import causalstates.kernels as K
from causalstates.kernels import DecayProfile, KernelSpec, SourceKernelSpec, gram_pair
from causalstates.series import Block, LibraryConfig, MultiSeries, SourceMeta, build_library


def build_library_of(n_anchors, window, rng):
    n = n_anchors + 2 * window - 1
    vals = rng.standard_normal((n, 2))
    block = Block([vals[:, :1], vals[:, 1:]], [np.ones(n, bool)] * 2)
    series = MultiSeries([SourceMeta("a"), SourceMeta("b")], [block])
    return build_library(series, LibraryConfig(window, window))


def time_backend(lib, spec, threads):
    best = np.inf
    result = None
    for _ in range(3):
        t0 = time.perf_counter()
        result = gram_pair(lib, spec, threads=threads)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main(argv):
    sizes = [int(a) for a in argv[1:]] or [200, 500, 1000]
    window = 32
    rng = np.random.default_rng(0)
    spec = KernelSpec(sources=[SourceKernelSpec(bandwidth=1.0)] * 2,
                      decay=DecayProfile("exponential", rate=0.05))

    if K._core is None:
        print("compiled backend is not built; showing the numpy fallback only\n")

    print(f"{'N':>6} {'window':>6} {'compiled 1t':>12} {'compiled 4t':>12} "
          f"{'numpy':>12} {'speedup':>8} {'max |diff|':>11}")
    for n in sizes:
        lib = build_library_of(n, window, rng)
        row = [f"{lib.n_pairs:>6}", f"{window:>6}"]
        compiled = None
        if K._core is not None:
            t1, compiled = time_backend(lib, spec, threads=1)
            t4, _ = time_backend(lib, spec, threads=4)
            row += [f"{t1 * 1e3:>10.1f}ms", f"{t4 * 1e3:>10.1f}ms"]
        else:
            row += [f"{'-':>12}", f"{'-':>12}"]

        saved, K._core = K._core, None
        try:
            tp, fallback = time_backend(lib, spec, threads=1)
        finally:
            K._core = saved
        row.append(f"{tp * 1e3:>10.1f}ms")
        if compiled is not None:
            row.append(f"{tp / t1:>7.1f}x")
            diff = max(np.abs(compiled.gx - fallback.gx).max(),
                       np.abs(compiled.gy - fallback.gy).max())
            row.append(f"{diff:>11.2e}")
        else:
            row += [f"{'-':>8}", f"{'-':>11}"]
        print(" ".join(row))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
