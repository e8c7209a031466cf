"""Compare the compiled kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is timed on identical inputs with both backends; results must
agree before a timing is reported.
"""

import argparse
import timeit

import numpy as np

from permlab import _fallback
from permlab.rng import Xoshiro256

try:
    from permlab import _kernels
except ImportError:
    _kernels = None


def cases():
    rng = np.random.default_rng(0)
    n, d = 800, 100
    a = np.full((n, d), 2.0)
    b = rng.standard_normal((n, d))
    perm = rng.permutation(n).astype(np.int64)
    x0 = rng.standard_normal(d)

    def diag(mod):
        x = x0.copy()
        mod.diag_epoch(a, b, x, perm, 1e-3)
        return x

    M = rng.standard_normal((64, 8, 8))
    A = np.ascontiguousarray(M @ np.swapaxes(M, 1, 2) / 8)
    bd = rng.standard_normal((64, 8))
    pd = rng.permutation(64).astype(np.int64)

    def dense(mod):
        x = np.ones(8)
        mod.dense_epoch(A, bd, x, pd, 1e-3, np.empty(8))
        return x

    def shuffle(mod):
        state = Xoshiro256(1).state.copy()
        arr = np.arange(n, dtype=np.int64)
        mod.shuffle_inplace(state, arr)
        return arr

    z = rng.choice([-1.0, 1.0], n)
    y = rng.integers(0, 2, n).astype(float)

    def logistic(mod):
        return mod.logistic_epoch(z, y, 0.1, perm, 0.01)

    return {"diag_epoch n=800 d=100": diag, "dense_epoch n=64 d=8": dense,
            "shuffle n=800": shuffle, "logistic_epoch n=800": logistic}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not available; only the fallback can run")
        return
    print(f"{'kernel':28s} {'cython':>12s} {'python':>12s} {'speedup':>9s}")
    for name, fn in cases().items():
        np.testing.assert_allclose(fn(_kernels), fn(_fallback), rtol=1e-13)
        times = {}
        for label, mod in (("cython", _kernels), ("python", _fallback)):
            t = timeit.Timer(lambda: fn(mod))
            number, _ = t.autorange()
            times[label] = min(t.repeat(args.repeat, number)) / number
        print(f"{name:28s} {times['cython'] * 1e6:10.1f}us {times['python'] * 1e6:10.1f}us "
              f"{times['python'] / times['cython']:8.1f}x")


if __name__ == "__main__":
    main()
