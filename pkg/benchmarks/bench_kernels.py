"""Time the numpy and numba routes of every hot kernel.

    python benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import time

import numpy as np

from tdde.kernels import JIT_KERNELS, NUMPY_KERNELS


def cases(rng):
    C = rng.uniform(0, 4, (2000, 2000))
    h = rng.standard_normal(2000)
    data = rng.standard_normal((5000, 2))
    q = rng.standard_normal((5000, 2))
    inv_h = np.array([4.0, 4.0])
    steps = np.array([0, 100, 500], dtype=np.int64)
    x2 = rng.standard_normal((20_000, 2))
    x3 = rng.standard_normal((20_000, 3))
    noise = 0.05 * rng.standard_normal((500, 20_000))
    return {
        "softmin_rows": (C, h, 0.01),
        "softmin_cols": (C, h, 0.01),
        "kde_logsumexp": (q, data, inv_h),
        "duffing_paths": (x2, noise, steps, 0.01, 0.25, 1.0, 1.0),
        "bouc_wen_paths": (x3, noise, steps, 0.01, 0.05, 1.0, 0.01, 1.0, 1.0, 1.0, 1.0),
    }


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':16s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s}")
    for name, a in cases(rng).items():
        jit = JIT_KERNELS[name]
        t_np = best_of(NUMPY_KERNELS[name], a, args.repeat)
        if jit is None:
            print(f"{name:16s} {t_np:10.4f} {'n/a':>10s}")
            continue
        jit(*a)  # compile outside the timing
        t_jit = best_of(jit, a, args.repeat)
        print(f"{name:16s} {t_np:10.4f} {t_jit:10.4f} {t_np / t_jit:8.1f}x")


if __name__ == "__main__":
    main()
