# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the objective evaluation.

Both kernels work on a batch of ``c`` candidate directions at once; row
``j`` of every ``(c, .)`` input belongs to direction ``j``. Work is split
into fixed-size tasks whose boundaries do not depend on the number of
threads, and partial sums are combined pairwise in a fixed order, so the
output is bitwise identical for any ``threads`` value.
"""

from cython.parallel cimport prange
from libc.math cimport INFINITY
from libc.stdlib cimport malloc, free

import numpy as np

DEF BLOCK = 2048
DEF LEAF = 16


def segment_bounds(const double[:, ::1] ap_t, const double[::1] slack,
                   double[::1] t0_out, double[::1] t1_out, int threads=1):
    """Feasible interval ``[t0, t1]`` of ``xbar + t p`` for each direction.

    ``ap_t[j, i]`` is ``A_i . p_j`` and ``slack[i] = A_i . xbar - b_i >= 0``.
    """
    cdef Py_ssize_t c = ap_t.shape[0]
    cdef Py_ssize_t m = ap_t.shape[1]
    cdef Py_ssize_t j, i
    cdef double lo, hi, v, alpha
    if slack.shape[0] != m or t0_out.shape[0] != c or t1_out.shape[0] != c:
        raise ValueError("shape mismatch in segment_bounds")
    for j in prange(c, nogil=True, num_threads=threads, schedule="static"):
        lo = -INFINITY
        hi = INFINITY
        for i in range(m):
            v = ap_t[j, i]
            if v > 0.0:
                alpha = -slack[i] / v
                if alpha > lo:
                    lo = alpha
            elif v < 0.0:
                alpha = slack[i] / (-v)
                if alpha < hi:
                    hi = alpha
        t0_out[j] = lo
        t1_out[j] = hi


cdef double _psum(const double* s, const double* yn, Py_ssize_t n,
                  double inv_pn, double pn, double lo, double hi) noexcept nogil:
    cdef Py_ssize_t i, h
    cdef double acc, a
    if n <= LEAF:
        acc = 0.0
        for i in range(n):
            a = s[i] * inv_pn
            if a < lo:
                a = lo
            elif a > hi:
                a = hi
            acc = acc + (yn[i] - 2.0 * a * s[i] + a * a * pn)
        return acc
    h = n // 2
    return (_psum(s, yn, h, inv_pn, pn, lo, hi)
            + _psum(s + h, yn + h, n - h, inv_pn, pn, lo, hi))


cdef double _psum_plain(const double* x, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, h
    cdef double acc
    if n <= LEAF:
        acc = 0.0
        for i in range(n):
            acc = acc + x[i]
        return acc
    h = n // 2
    return _psum_plain(x, h) + _psum_plain(x + h, n - h)


def clamped_residuals(const double[:, ::1] s_t, const double[::1] ynorm2,
                      const double[::1] pnorm2, const double[::1] t0,
                      const double[::1] t1, double[::1] out, int threads=1):
    """Sum of squared distances to the clamped segment, per direction.

    For direction ``j`` and centred point ``y_i`` with ``s = y_i . p_j``,
    the optimal coefficient is ``a = clamp(s / |p_j|^2, t0, t1)`` and the
    squared distance is ``|y_i|^2 - 2 a s + a^2 |p_j|^2``.
    """
    cdef Py_ssize_t c = s_t.shape[0]
    cdef Py_ssize_t n = s_t.shape[1]
    cdef Py_ssize_t nblk, task, j, b, start, length
    cdef double pn
    if (ynorm2.shape[0] != n or pnorm2.shape[0] != c or t0.shape[0] != c
            or t1.shape[0] != c or out.shape[0] != c):
        raise ValueError("shape mismatch in clamped_residuals")
    if n == 0:
        for j in range(c):
            out[j] = 0.0
        return
    nblk = (n + BLOCK - 1) // BLOCK
    cdef double* partial = <double*> malloc(c * nblk * sizeof(double))
    if partial == NULL:
        raise MemoryError()
    try:
        for task in prange(c * nblk, nogil=True, num_threads=threads, schedule="static"):
            j = task // nblk
            b = task % nblk
            start = b * BLOCK
            length = n - start
            if length > BLOCK:
                length = BLOCK
            pn = pnorm2[j]
            partial[task] = _psum(&s_t[j, start], &ynorm2[start], length,
                                  1.0 / pn, pn, t0[j], t1[j])
        for j in range(c):
            out[j] = _psum_plain(&partial[j * nblk], nblk)
    finally:
        free(partial)
