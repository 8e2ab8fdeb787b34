# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled tridiagonal kernels: Sturm counts, bisection and shifted solves."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

BACKEND = "cython"


cdef Py_ssize_t _count(const double[::1] d, const double[::1] e2, double x) nogil:
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t i, c = 0
    cdef double q = d[0] - x
    cdef double tiny = 1e-300
    if q < 0.0:
        c += 1
    for i in range(1, n):
        if fabs(q) < tiny:
            q = -tiny if q < 0.0 else tiny
        q = d[i] - x - e2[i - 1] / q
        if q < 0.0:
            c += 1
    return c


def sturm_count(const double[::1] d, const double[::1] e2, double x):
    """Number of eigenvalues strictly below ``x``."""
    return _count(d, e2, x)


def bisect_eigenvalue(const double[::1] d, const double[::1] e2, Py_ssize_t k,
                      double lo, double hi, double tol):
    """Eigenvalue of index ``k`` (0-based) inside ``[lo, hi]`` by bisection."""
    cdef double mid
    cdef int it = 0
    with nogil:
        while hi - lo > tol * (1.0 + fabs(lo) + fabs(hi)) and it < 200:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if _count(d, e2, mid) > k:
                hi = mid
            else:
                lo = mid
            it += 1
    return 0.5 * (lo + hi)


def tridiag_shift_solve(const double[::1] d, const double[::1] e, double shift,
                        const double[::1] rhs):
    """Solve ``(T - shift) x = rhs`` for symmetric tridiagonal ``T``.

    Gaussian elimination without pivoting; a vanishing pivot is nudged,
    which is the standard device for inverse iteration.
    """
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] piv = np.empty(n)
    cdef double[::1] xv = x
    cdef double[::1] pv = piv
    cdef double eps = 1e-14 * (fabs(d[0]) + 1.0)
    cdef double m
    with nogil:
        pv[0] = d[0] - shift
        if fabs(pv[0]) < eps:
            pv[0] = eps
        xv[0] = rhs[0]
        for i in range(1, n):
            m = e[i - 1] / pv[i - 1]
            pv[i] = d[i] - shift - m * e[i - 1]
            if fabs(pv[i]) < eps:
                pv[i] = eps
            xv[i] = rhs[i] - m * xv[i - 1]
        xv[n - 1] = xv[n - 1] / pv[n - 1]
        for i in range(n - 2, -1, -1):
            xv[i] = (xv[i] - e[i] * xv[i + 1]) / pv[i]
    return x
