"""Time the compiled Jacobi eigensolver against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 24 48 96] [--repeat 5]

Inputs are lagged-correlation matrices of an AR(1) series, the matrices the
package actually decomposes. Both backends must agree bit for bit.
"""
import argparse
import timeit

import numpy as np

from olinear import _fallback
from olinear.data import from_array, lagged_temporal_corr
from olinear.synthetic import ar1

try:
    from olinear import _kernels
except ImportError:
    _kernels = None


def corr_matrix(n: int) -> np.ndarray:
    ds = from_array(ar1(20000, 3, 0.7, np.random.default_rng(0)), 0.7, 0.1)
    return np.ascontiguousarray(lagged_temporal_corr(ds, n).matrix)


def best_of(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[24, 48, 96])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'n':>5} {'sweeps':>7} {'cython ms':>10} {'python ms':>10} {'speedup':>8}  identical")
    for n in args.sizes:
        a = corr_matrix(n)
        fast = _kernels.jacobi_eigh(a.copy())
        slow = _fallback.jacobi_eigh(a.copy())
        same = all(np.array_equal(x, y) for x, y in zip(fast[:2], slow[:2])) and fast[2] == slow[2]
        tc = best_of(lambda: _kernels.jacobi_eigh(a.copy()), args.repeat)
        tp = best_of(lambda: _fallback.jacobi_eigh(a.copy()), args.repeat)
        print(f"{n:>5} {fast[2]:>7} {tc * 1e3:>10.2f} {tp * 1e3:>10.2f} {tp / tc:>8.1f}  {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
