#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from mlfr._kernels import _pure

try:
    from mlfr._kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(repeat):
    rng = np.random.default_rng(0)
    x = rng.random((16, 64, 64))
    w = rng.normal(size=(32, 16, 3, 3))
    b = rng.normal(size=32)
    r_out = rng.normal(size=(32, 64, 64))
    color = np.ascontiguousarray(rng.random((3, 96, 96)) * 0.2)
    density = _pure.quickshift_density(color, 2.0, 6)
    v = rng.random((256, 64)) + 0.05
    v /= np.linalg.norm(v, axis=0)
    xe = rng.random(256)
    gram = np.ascontiguousarray(v.T @ v)
    cov = np.ascontiguousarray(v.T @ xe)

    cases = [
        ("conv2d_forward 16x64x64 -> 32", lambda m: m.conv2d_forward(x, w, b, (1, 1), (1, 1))),
        (
            "conv2d_lrp_epsilon same",
            lambda m: m.conv2d_lrp_epsilon(x, w, b, r_out, (1, 1), (1, 1), 1e-6),
        ),
        ("maxpool2d 16x64x64 k2", lambda m: m.maxpool2d_forward(x, (2, 2), (2, 2))),
        ("quickshift_density 96x96 r6", lambda m: m.quickshift_density(color, 2.0, 6)),
        (
            "quickshift_link 96x96 r10",
            lambda m: m.quickshift_link(color, density, 10.0, 10),
        ),
        (
            "cd_nnlasso k=64",
            lambda m: m.cd_nnlasso(gram, cov, 0.01, np.zeros(64), 500, 1e-10),
        ),
    ]

    print(f"{'kernel':<34} {'pure':>10} {'compiled':>10} {'speedup':>8}")
    for name, call in cases:
        t_pure = timeit(lambda: call(_pure), repeat)
        if _core is None:
            print(f"{name:<34} {t_pure * 1e3:>8.2f}ms {'n/a':>10} {'n/a':>8}")
            continue
        t_core = timeit(lambda: call(_core), repeat)
        print(
            f"{name:<34} {t_pure * 1e3:>8.2f}ms {t_core * 1e3:>8.2f}ms "
            f"{t_pure / t_core:>7.1f}x"
        )


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    bench(parser.parse_args().repeat)
