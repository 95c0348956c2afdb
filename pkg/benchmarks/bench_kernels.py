"""Time the compiled kernels against the numpy fallback.

Run ``python3 benchmarks/bench_kernels.py``.  Both backends get identical
inputs; the script checks that their outputs agree before timing.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np
import scipy.linalg

from breakbayes import _pykernels, kernels
from breakbayes.model import BreakGrid, ssr_profile
from breakbayes.simulation import DgpSpec, generate

try:
    from breakbayes import _ckernels
except ImportError:
    _ckernels = None


def sweep_inputs(T: int, dx: int, dz: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(T), rng.standard_normal((T, dx - 1))])
    Z = X[:, :dz]
    y = X @ rng.standard_normal(dx) + rng.standard_normal(T)
    Q, R = np.linalg.qr(X)
    qy = Q.T @ y
    e = y - Q @ qy
    rinv = scipy.linalg.solve_triangular(R, np.eye(dx))
    ks = BreakGrid.trimmed(T, 0.05).indices.astype(np.int64)
    zero = np.zeros((dz, dz))
    return (e, Q, Z, ks, zero, np.zeros((dx, dz)), np.zeros(dz), rinv, rinv @ qy, float(e @ e))


def walk_inputs(n_paths: int, m: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return -0.5 + rng.standard_normal((n_paths, m))


def bench(fn, args, repeat: int) -> float:
    number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(*args), number=1), 1e-6)))
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the numpy fallback is available")
    cases = [
        (f"break_sweep T={T} dx={dx} dz={dz}", "break_sweep", sweep_inputs(T, dx, dz))
        for T, dx, dz in [(100, 1, 1), (1000, 1, 1), (1000, 5, 5), (10000, 2, 1)]
    ] + [
        (f"walk_argmax {n}x{m}", "walk_argmax", (walk_inputs(n, m),))
        for n, m in [(1000, 200), (1000, 5000)]
    ]
    print(f"{'case':<34} {'numpy [ms]':>11} {'cython [ms]':>12} {'speedup':>8}")
    for name, fn, inputs in cases:
        run = getattr(kernels, fn)
        t_py = bench(lambda *a: run(*a, impl=_pykernels), inputs, args.repeat)
        if _ckernels is None:
            print(f"{name:<34} {t_py * 1e3:>11.3f} {'-':>12} {'-':>8}")
            continue
        a, b = run(*inputs, impl=_pykernels), run(*inputs, impl=_ckernels)
        for u, v in zip(a, b):
            np.testing.assert_allclose(np.nan_to_num(u), np.nan_to_num(v), rtol=1e-9, atol=1e-9)
        t_c = bench(lambda *a: run(*a, impl=_ckernels), inputs, args.repeat)
        print(f"{name:<34} {t_py * 1e3:>11.3f} {t_c * 1e3:>12.3f} {t_py / t_c:>7.1f}x")

    # end-to-end: one simulated dataset through the whole SSR profile

    ds = generate(DgpSpec(1000, 0.5, (1.0,)), 0)
    grid = BreakGrid.trimmed(ds.T, 0.05)
    t = bench(ssr_profile, (ds, grid), args.repeat)
    print(f"\nssr_profile T=1000 via selected backend ({kernels.BACKEND}): {t * 1e3:.3f} ms")


if __name__ == "__main__":
    main()
