"""Compare the numba kernels with their pure-numpy/python fallbacks.

    python3 benchmarks/bench_kernels.py [--trials 2000] [--repeat 3]

Both paths consume the same variates; the script checks that they agree
before timing them.
"""
import argparse
import time

import numpy as np

from bcsa.csma import csma_kernel_numba, csma_kernel_python
from bcsa.kernels import decode_batch_numba, decode_batch_numpy
from bcsa.model import DegreeDistribution, sample_degrees


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_decode(trials, repeat):
    dist = DegreeDistribution.parse("0.86x^3+0.14x^8")
    rng = np.random.default_rng(0)
    for n, g in ((172, 0.5), (172, 0.7), (315, 0.7)):
        m = round(g * n)
        degrees = sample_degrees(dist, rng.random((trials, m)))
        u = rng.random((trials, m, dist.max_degree))
        a = decode_batch_numba(degrees, u, n, 8)  # also triggers compilation
        b = decode_batch_numpy(degrees, u, n, 8)
        assert np.array_equal(a, b)
        tn = best_of(lambda: decode_batch_numba(degrees, u, n, 8), repeat)
        tp = best_of(lambda: decode_batch_numpy(degrees, u, n, 8), repeat)
        print(f"decode  n={n:3d} m={m:3d}  numba {1e6 * tn / trials:8.2f} us/trial"
              f"  numpy {1e6 * tp / trials:8.2f} us/trial  speedup {tp / tn:6.1f}x")


def bench_csma(runs, repeat):
    rng = np.random.default_rng(1)
    frame = 100_000_000
    for m in (52, 120):
        tau = rng.integers(0, frame, size=(runs, m))
        backoff = rng.integers(0, 2048, size=(runs, m, 4))
        obs = rng.integers(0, m, size=runs)
        args = (tau, backoff, obs, 58_000, 13_000, 576_000, frame, 2 * frame, 3 * frame)
        assert np.array_equal(csma_kernel_numba(*args), csma_kernel_python(*args))
        tn = best_of(lambda: csma_kernel_numba(*args), repeat)
        tp = best_of(lambda: csma_kernel_python(*args), 1)
        print(f"csma    m={m:3d}        numba {1e3 * tn / runs:8.3f} ms/run"
              f"    python {1e3 * tp / runs:8.3f} ms/run    speedup {tp / tn:6.1f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--runs", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    bench_decode(args.trials, args.repeat)
    bench_csma(args.runs, args.repeat)


if __name__ == "__main__":
    main()
