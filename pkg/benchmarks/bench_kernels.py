"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

The first numba call (JIT compile or cache load) is excluded from timings.
"""
import argparse
import time

import numpy as np

from vpemo.kernels import HAVE_NUMBA, NUMBA_KERNELS, NUMPY_KERNELS


def cases(rng):
    src = rng.standard_normal((400, 64))
    pool = rng.standard_normal((15000, 64))
    pool_n = pool / np.linalg.norm(pool, axis=1, keepdims=True)
    ref = rng.integers(0, 50, 300).astype(np.int64)
    hyp = rng.integers(0, 50, 280).astype(np.int64)
    X = rng.standard_normal((500, 16))
    sq = (X * X).sum(1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * X @ X.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    P = rng.random((500, 500))
    P = P + P.T
    np.fill_diagonal(P, 0.0)
    P /= P.sum()
    Y = rng.standard_normal((500, 2))
    return {
        "knn_convert": (src, pool_n, 4, True),
        "edit_table": (ref, hyp),
        "perplexity_search": (d2, 30.0, 1e-5, 200),
        "tsne_gradient": (Y, P, 1.0),
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
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba not installed; only the numpy column is meaningful")
    print(f"{'kernel':<20}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>10}")
    for name, call_args in cases(np.random.default_rng(args.seed)).items():
        NUMBA_KERNELS[name](*call_args)  # warm up / compile
        t_np = best_of(NUMPY_KERNELS[name], call_args, args.repeat)
        t_nb = best_of(NUMBA_KERNELS[name], call_args, args.repeat)
        print(f"{name:<20}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
