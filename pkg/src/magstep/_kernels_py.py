"""Pure-Python versions of the tridiagonal kernels (same algorithms)."""
import numpy as np

BACKEND = "python"


def sturm_count(d, e2, x):
    """Number of eigenvalues strictly below ``x``."""
    tiny = 1e-300
    q = d[0] - x
    c = 1 if q < 0.0 else 0
    for i in range(1, len(d)):
        if abs(q) < tiny:
            q = -tiny if q < 0.0 else tiny
        q = d[i] - x - e2[i - 1] / q
        if q < 0.0:
            c += 1
    return c


def bisect_eigenvalue(d, e2, k, lo, hi, tol):
    """Eigenvalue of index ``k`` (0-based) inside ``[lo, hi]`` by bisection."""
    d = d.tolist()
    e2 = e2.tolist()
    it = 0
    while hi - lo > tol * (1.0 + abs(lo) + abs(hi)) and it < 200:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if sturm_count(d, e2, mid) > k:
            hi = mid
        else:
            lo = mid
        it += 1
    return 0.5 * (lo + hi)


def tridiag_shift_solve(d, e, shift, rhs):
    """Solve ``(T - shift) x = rhs`` for symmetric tridiagonal ``T``."""
    n = len(d)
    d = d.tolist()
    e = e.tolist()
    x = list(rhs)
    piv = [0.0] * n
    eps = 1e-14 * (abs(d[0]) + 1.0)
    piv[0] = d[0] - shift
    if abs(piv[0]) < eps:
        piv[0] = eps
    for i in range(1, n):
        m = e[i - 1] / piv[i - 1]
        piv[i] = d[i] - shift - m * e[i - 1]
        if abs(piv[i]) < eps:
            piv[i] = eps
        x[i] = x[i] - m * x[i - 1]
    x[n - 1] /= piv[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = (x[i] - e[i] * x[i + 1]) / piv[i]
    return np.asarray(x)
