#!/usr/bin/env python3
"""Benchmark the quantizer hot kernel: numba @njit vs pure numpy.

Both paths produce bitwise-identical outputs; this measures the speed
difference across vector sizes and for the Monte-Carlo moment
accumulator.  Run after `pip install -e .`:

    python3 benchmarks/bench_quantize.py
"""

import time

import numpy as np

from fedsynsam import _kernels
from fedsynsam.rng import Rng


def time_call(fn, *args, repeat=200):
    fn(*args)  # warm up / JIT compile
    best = float("inf")
    for _ in range(5):
        start = time.perf_counter()
        for _ in range(repeat):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / repeat)
    return best


def main():
    print(f"numba path available: {_kernels.USING_NUMBA}")
    if not _kernels.USING_NUMBA:
        print("set FEDSYNSAM_NUMBA=1 (and install numba) to compare; exiting")
        return

    rng = Rng(0, "bench")
    print(f"\n{'d':>8} {'numba':>12} {'numpy':>12} {'speedup':>8}")
    for d in (256, 1024, 16384, 262144):
        v = rng.normal(size=d)
        norm = float(np.linalg.norm(v))
        uniforms = rng.uniform(size=d)
        t_nb = time_call(_kernels.quantize_values, v, norm, 17.0, uniforms)
        t_np = time_call(_kernels.quantize_values_numpy, v, norm, 17.0, uniforms)
        out_nb = _kernels.quantize_values(v, norm, 17.0, uniforms)
        out_np = _kernels.quantize_values_numpy(v, norm, 17.0, uniforms)
        assert out_nb.tobytes() == out_np.tobytes(), "paths diverged"
        print(f"{d:>8} {t_nb * 1e6:>10.1f}us {t_np * 1e6:>10.1f}us {t_np / t_nb:>7.1f}x")

    print(f"\nMonte-Carlo moments, 10000 x 512 draws:")
    v = rng.normal(size=512)
    norm = float(np.linalg.norm(v))
    uniforms = rng.uniform(size=(10000, 512))
    t_nb = time_call(_kernels.quantize_moments, v, norm, 17.0, uniforms, repeat=5)
    t_np = time_call(_kernels.quantize_moments_numpy, v, norm, 17.0, uniforms, repeat=5)
    print(f"  numba {t_nb * 1e3:.1f}ms  numpy {t_np * 1e3:.1f}ms  speedup {t_np / t_nb:.1f}x")


if __name__ == "__main__":
    main()
