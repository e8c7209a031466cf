# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics mirror permlab._fallback exactly."""

from libc.math cimport exp, tanh
from libc.stdint cimport uint64_t, int64_t

BACKEND = "cython"


cdef inline uint64_t _rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t _next(uint64_t* s) nogil:
    cdef uint64_t result = _rotl(s[1] * 5, 7) * 9
    cdef uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


cdef inline int _bitlen(uint64_t v) nogil:
    cdef int b = 0
    while v:
        b += 1
        v >>= 1
    return b


cdef inline uint64_t _bounded(uint64_t* s, uint64_t n) nogil:
    cdef int shift
    cdef uint64_t r
    if n == 1:
        return 0
    shift = 64 - _bitlen(n - 1)
    while True:
        r = _next(s) >> shift
        if r < n:
            return r


def shuffle_inplace(uint64_t[::1] state, int64_t[::1] arr):
    """Fisher-Yates from the last index down, advancing ``state``."""
    cdef Py_ssize_t i
    cdef uint64_t j
    cdef int64_t tmp
    cdef uint64_t s[4]
    for i in range(4):
        s[i] = state[i]
    with nogil:
        i = arr.shape[0] - 1
        while i > 0:
            j = _bounded(s, <uint64_t>(i + 1))
            tmp = arr[i]
            arr[i] = arr[j]
            arr[j] = tmp
            i -= 1
    for i in range(4):
        state[i] = s[i]


def diag_epoch(const double[:, ::1] a, const double[:, ::1] b, double[::1] x,
               const int64_t[::1] perm, double alpha):
    """One epoch on a quadratic with diagonal Hessians, in place."""
    cdef Py_ssize_t t, j, i
    cdef Py_ssize_t n = perm.shape[0]
    cdef Py_ssize_t d = x.shape[0]
    with nogil:
        for t in range(n):
            i = perm[t]
            for j in range(d):
                x[j] = x[j] - alpha * (a[i, j] * x[j] - b[i, j])


def dense_epoch(const double[:, :, ::1] A, const double[:, ::1] b, double[::1] x,
                const int64_t[::1] perm, double alpha, double[::1] work):
    """One epoch on a dense quadratic, in place. ``work`` has length d."""
    cdef Py_ssize_t t, j, k, i
    cdef Py_ssize_t n = perm.shape[0]
    cdef Py_ssize_t d = x.shape[0]
    cdef double acc
    with nogil:
        for t in range(n):
            i = perm[t]
            for j in range(d):
                acc = 0.0
                for k in range(d):
                    acc = acc + A[i, j, k] * x[k]
                work[j] = acc - b[i, j]
            for j in range(d):
                x[j] = x[j] - alpha * work[j]


def logistic_epoch(const double[::1] z, const double[::1] y, double x,
                   const int64_t[::1] perm, double alpha):
    """One epoch of 1-D logistic regression; returns the endpoint."""
    cdef Py_ssize_t t, i
    cdef double h
    with nogil:
        for t in range(perm.shape[0]):
            i = perm[t]
            h = 1.0 / (1.0 + exp(-(x * z[i])))
            x = x - alpha * ((h - y[i]) * z[i])
    return x


def logcosh_epoch(const double[::1] a, const double[::1] b, const double[::1] eps,
                  const double[::1] c, double x, const int64_t[::1] perm, double alpha):
    """One epoch of the quadratic-plus-log-cosh family; returns the endpoint."""
    cdef Py_ssize_t t, i
    with nogil:
        for t in range(perm.shape[0]):
            i = perm[t]
            x = x - alpha * (a[i] * x - b[i] + eps[i] * tanh(x - c[i]))
    return x
