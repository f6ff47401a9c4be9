"""Timing comparison of the numba kernels against the numpy fallbacks.

Run directly: python benchmarks/bench_kernels.py
The workload mirrors a 257^2 assembly pass (regular-cell group) plus the
oscillation-scan kernel. First numba calls include JIT compilation; the
table reports warmed timings.
"""

import time

import numpy as np

from degenlab import _kernels


def timeit(fn, *args, repeat=5):
    fn(*args)  # warm (JIT) once
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    ncells, P, nb, d = 65536, 9, 4, 2
    wq = rng.uniform(0.5, 1.0, P)
    wvals = rng.uniform(0.1, 10.0, (ncells, P))
    G = rng.normal(size=(P, nb, nb))
    G = G + G.transpose(0, 2, 1)
    dphi = rng.normal(size=(P, nb, d))
    apts = np.broadcast_to(np.eye(d), (ncells, P, d, d)).copy()
    phi = rng.uniform(size=(P, nb))
    fvals = rng.normal(size=(ncells, P))
    Fvals = rng.normal(size=(ncells, P, d))
    codes = rng.integers(0, 4096, size=600_000)
    vals = rng.normal(size=600_000)

    pairs = [
        ("stiffness_const", (_kernels.stiffness_const_np, wq, wvals, G)),
        ("stiffness_var", (_kernels.stiffness_var_np, wq, wvals, apts, dphi)),
        ("load_terms", (_kernels.load_np, wq, wvals, fvals, Fvals, phi, dphi, 1.0, 1.0)),
        ("group_minmax", (_kernels.group_minmax_np, codes, vals, 4096)),
    ]
    numba_fns = {}
    if _kernels.kernel_path() == "numba":
        numba_fns = {
            "stiffness_const": _kernels.stiffness_const_nb,
            "stiffness_var": _kernels.stiffness_var_nb,
            "load_terms": _kernels.load_nb,
            "group_minmax": _kernels.group_minmax_nb,
        }

    print(f"active kernel path: {_kernels.kernel_path()}")
    print(f"{'kernel':<18} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>9}")
    for name, (np_fn, *args) in pairs:
        t_np = timeit(np_fn, *args) * 1e3
        if name in numba_fns:
            t_nb = timeit(numba_fns[name], *args) * 1e3
            print(f"{name:<18} {t_np:>12.2f} {t_nb:>12.2f} {t_np / t_nb:>8.1f}x")
        else:
            print(f"{name:<18} {t_np:>12.2f} {'-':>12} {'-':>9}")


if __name__ == "__main__":
    main()
