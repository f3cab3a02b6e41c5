#!/usr/bin/env python3
"""Throughput comparison of the jitted kernels against the numpy fallback.

Times the three hot paths (trajectory simulation, fixed-gain prediction,
per-trajectory gradient) at the benchmark-problem scale plus one larger
configuration. Run directly:

    python benchmarks/bench_kernels.py

The numbers also indicate what GAINLEARN_DISABLE_NUMBA=1 costs end to end.
"""

import time

import numpy as np

from gainlearn import kernels


def _time(fn, args, repeat, warmup=2):
    for _ in range(warmup):
        fn(*args)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def bench_case(n, m, T, M, repeat=200):
    rng = np.random.default_rng(0)
    A = rng.normal(size=(n, n)) * 0.4
    H = rng.normal(size=(m, n))
    L = rng.normal(size=(n, m)) * 0.2
    A_L = np.ascontiguousarray(A - L @ H)
    H = np.ascontiguousarray(H)
    L = np.ascontiguousarray(L)
    x0 = rng.normal(size=n)
    xi = rng.normal(size=(T, n))
    omega = rng.normal(size=(T + 1, m))
    ys = rng.normal(size=(T + 1, m))
    Y = np.ascontiguousarray(rng.normal(size=(M, T + 1, m)))
    m0 = np.zeros(n)

    rows = []
    pairs = [
        ("simulate", (A, H, x0, xi, omega),
         kernels._simulate_numpy, kernels._simulate_numba),
        ("predict", (A_L, H, L, ys, m0),
         kernels._predict_numpy, kernels._predict_numba),
        ("traj_grad", (A_L, H, L, ys),
         kernels._traj_grad_numpy, kernels._traj_grad_numba),
        (f"batch_grad(M={M})", (A_L, H, L, Y),
         kernels._batch_grads_numpy, kernels._batch_grads_numba),
    ]
    for name, args, fn_np, fn_nb in pairs:
        t_np = _time(fn_np, args, repeat)
        t_nb = _time(fn_nb, args, repeat)
        rows.append((name, t_np * 1e6, t_nb * 1e6, t_np / t_nb))
    return rows


def main():
    print(f"active backend: {kernels.active_backend()}")
    for n, m, T, M in ((2, 1, 50, 100), (6, 3, 200, 50)):
        print(f"\nn={n} m={m} T={T}")
        print(f"{'kernel':>18} {'numpy (us)':>12} {'numba (us)':>12} {'speedup':>9}")
        for name, t_np, t_nb, speedup in bench_case(n, m, T, M):
            print(f"{name:>18} {t_np:12.1f} {t_nb:12.1f} {speedup:8.1f}x")


if __name__ == "__main__":
    main()
