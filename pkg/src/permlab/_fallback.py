"""Pure-Python/numpy versions of the compiled kernels.

Every function has the same signature and in-place behavior as its
counterpart in ``_kernels.pyx``. Elementwise kernels perform the same
floating-point operations in the same order, so results agree bit for bit;
``dense_epoch`` uses BLAS matvecs and agrees to rounding.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

_MASK = (1 << 64) - 1


def _next(s: list[int]) -> int:
    s0, s1, s2, s3 = s
    r = ((s1 * 5) & _MASK)
    r = (((r << 7) | (r >> 57)) & _MASK) * 9 & _MASK
    t = (s1 << 17) & _MASK
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = ((s3 << 45) | (s3 >> 19)) & _MASK
    s[0], s[1], s[2], s[3] = s0, s1, s2, s3
    return r


def shuffle_inplace(state: np.ndarray, arr: np.ndarray) -> None:
    s = [int(w) for w in state]
    for i in range(len(arr) - 1, 0, -1):
        n = i + 1
        shift = 64 - (n - 1).bit_length()
        while True:
            j = _next(s) >> shift
            if j < n:
                break
        arr[i], arr[j] = arr[j], arr[i]
    state[:] = s


def diag_epoch(a, b, x, perm, alpha):
    for i in perm:
        x -= alpha * (a[i] * x - b[i])


def dense_epoch(A, b, x, perm, alpha, work):
    for i in perm:
        np.subtract(A[i] @ x, b[i], out=work)
        x -= alpha * work


def _sigmoid(t: float) -> float:
    # same value as C's 1/(1+exp(-t)), where exp overflows to inf
    try:
        return 1.0 / (1.0 + math.exp(-t))
    except OverflowError:
        return 0.0


def logistic_epoch(z, y, x, perm, alpha):
    x = float(x)
    for i in perm:
        h = _sigmoid(x * z[i])
        x = x - alpha * ((h - y[i]) * z[i])
    return x


def logcosh_epoch(a, b, eps, c, x, perm, alpha):
    x = float(x)
    for i in perm:
        x = x - alpha * (a[i] * x - b[i] + eps[i] * math.tanh(x - c[i]))
    return x
