"""Time the numba and numpy kernel backends on representative inputs.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best wall time of each backend and the
speed-up. The first numba call (JIT compilation) is excluded.
"""

import argparse
import time

import numpy as np

from condweight import kernels


def best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(gen):
    q = gen.uniform(0.05, 0.95, 400)
    w = q / (1 - q)
    order = np.arange(10_100, dtype=np.int64)
    offsets = np.array([0, 10_000, 10_100], dtype=np.int64)
    alloc = np.array([400, 20], dtype=np.int64)
    u_fixed = gen.random((4096, 420))
    idx = NP.decode_fixed(u_fixed, order, offsets, alloc)
    sizes = np.full(idx.shape[0], idx.shape[1], dtype=np.int64)
    wmat = gen.normal(size=(1, 10_100))
    accept = gen.random(idx.shape[0]) < 0.05
    pair_pos = -np.ones(10_100, dtype=np.int64)
    pair_pos[idx[0]] = np.arange(idx.shape[1])
    p_pois = gen.uniform(0.1, 0.3, 100)
    labels = np.repeat([0, 1], 50).astype(np.int64)
    required = np.array([10, -1], dtype=np.int64)
    u_pois = gen.random((20_000, 100))
    return {
        "pb_pmf (N=400)": lambda m: m.pb_pmf(q),
        "cps_recursion (N=400, n=100)": lambda m: m.cps_recursion(w, 100, False),
        "cps_loo (N=400, n=100)": lambda m: m.cps_loo(q, 100),
        "cps_pairs (N=400, n=100)": lambda m: m.cps_pairs(q, 100),
        "decode_fixed (4096 x 420)": lambda m: m.decode_fixed(u_fixed, order, offsets, alloc),
        "decode_poisson (20000 x 100)": lambda m: m.decode_poisson(u_pois, p_pois, labels, required, 100, 10**9),
        "linear_stat (4096 x 420)": lambda m: m.linear_stat(idx, sizes, wmat),
        "tally with 420 pairs": lambda m: m.tally(
            idx, sizes, accept, pair_pos, np.zeros(10_100, np.int64), np.zeros((420, 420), np.int64)
        ),
    }


NB = kernels.load("numba")
NP = kernels.load("numpy")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    gen = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numba (ms)':>11s} {'numpy (ms)':>11s} {'speed-up':>9s}")
    for name, fn in cases(gen).items():
        fn(NB)  # compile
        t_nb = best(lambda: fn(NB), args.repeat)
        t_np = best(lambda: fn(NP), args.repeat)
        print(f"{name:34s} {1e3 * t_nb:11.2f} {1e3 * t_np:11.2f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
