"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--scenarios 20000] [--repeat 200]

Also times one full backward solve of the bundled three-asset example with
each backend.
"""

import argparse
import time
import timeit

import numpy as np

from tcportfolio import _pykernels
from tcportfolio.market import MarketSpec, generate_scenarios

try:
    from tcportfolio import _ckernels
except ImportError:
    _ckernels = None

EXAMPLE = dict(riskfree=[1.05, 1.05, 1.05], mean=[0.14, 0.16, 0.17], std=[0.185, 0.30, 0.24],
              corr=[[1, 0.64, 0.79], [0.64, 1, 0.75], [0.79, 0.75, 1]])


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def full_solve(backend):
    from tcportfolio import optimizer, recursion
    from tcportfolio.recursion import RiskAversionSpec

    market = MarketSpec(**EXAMPLE)
    sc = generate_scenarios(market, 20000, 2015)
    original = recursion.kernels.branch_sums
    recursion.kernels.branch_sums = backend.branch_sums
    try:
        t0 = time.perf_counter()
        optimizer.backward_solve(market, RiskAversionSpec.constant(3, 1.0, 1.0, 2.0), sc)
        return time.perf_counter() - t0
    finally:
        recursion.kernels.branch_sums = original


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenarios", type=int, default=20000)
    ap.add_argument("--paths", type=int, default=100000)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    sc = generate_scenarios(MarketSpec(**EXAMPLE), args.scenarios, 1)
    P = np.ascontiguousarray(sc.period(0))
    K = np.array([0.6, -0.1, 0.7])
    paths = generate_scenarios(MarketSpec(**EXAMPLE), args.paths, 2, sampling="plain").excess
    s = np.full(3, 1.05)
    ref = np.array([1.73, 1.81, 1.90])
    ku = np.tile(K, (3, 1))
    kd = -ku

    cases = [
        ("branch_sums", lambda m: (lambda: m.branch_sums(P, K, 1.05, 1)), args.repeat),
        ("upper_fraction", lambda m: (lambda: m.upper_fraction(P, K, 1.05, -1)), args.repeat),
        ("wealth_paths", lambda m: (lambda: m.wealth_paths(paths, s, ref, ku, kd, 1.0)), 10),
    ]
    print(f"{'kernel':<16}{'numpy [ms]':>12}{'cython [ms]':>13}{'speedup':>9}")
    for name, make, rep in cases:
        tp = best_of(make(_pykernels), rep) * 1e3
        tc = best_of(make(_ckernels), rep) * 1e3
        print(f"{name:<16}{tp:12.3f}{tc:13.3f}{tp / tc:9.1f}x")
    tp, tc = full_solve(_pykernels), full_solve(_ckernels)
    print(f"{'backward_solve':<16}{tp * 1e3:12.1f}{tc * 1e3:13.1f}{tp / tc:9.1f}x")


if __name__ == "__main__":
    main()
