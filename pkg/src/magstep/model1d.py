"""One-dimensional fiber operators and their band minima.

Two model operators are discretized with three-point finite differences:

* the flat-edge operator ``h_a[xi] = -d^2/dtau^2 + (xi + b_a(tau) tau)^2`` on
  the whole line, where ``b_a = 1`` for ``tau >= 0`` and ``b_a = a`` otherwise;
* the de Gennes operator ``-d^2/dtau^2 + (xi + tau)^2`` on the half line with a
  Neumann condition at ``tau = 0``.

Lowest eigenpairs come from Sturm-sequence bisection followed by inverse
iteration on the symmetric tridiagonal matrix (see :mod:`magstep.kernels`).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import kernels
from .errors import (
    BracketingFailed,
    GridTooNarrow,
    NonConvexAtMinimum,
    NonPositiveGroundState,
    ValidationError,
)

DEFAULT_HALF_WIDTH = 30.0
DEFAULT_SPACING = 0.003
DEFAULT_DECAY_TOL = 1e-10
DEFAULT_WINDOW = (-3.0, 1.0)
DEFAULT_SCAN_STEP = 0.05
SCAN_SPACING = 0.02


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on ``[tau_min, tau_max]``.

    Whole-line grids contain ``tau = 0`` as a node; half-line grids start
    at 0.
    """

    tau_min: float
    tau_max: float
    n_points: int
    nodes: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        x = self.nodes
        if len(x) != self.n_points or self.n_points < 5:
            raise ValidationError("grid node count mismatch")
        if not np.all(np.diff(x) > 0):
            raise ValidationError("grid nodes must be strictly increasing")
        if x[0] != self.tau_min or x[-1] != self.tau_max:
            raise ValidationError("grid end nodes must equal tau_min/tau_max")

    @classmethod
    def whole_line(cls, half_width=DEFAULT_HALF_WIDTH, spacing=DEFAULT_SPACING,
                   tau_min=None, tau_max=None):
        """Grid with ``tau = 0`` as a node and uniform ``spacing``."""
        lo = -half_width if tau_min is None else tau_min
        hi = half_width if tau_max is None else tau_max
        n_left = int(round(-lo / spacing))
        n_right = int(round(hi / spacing))
        nodes = spacing * np.arange(-n_left, n_right + 1, dtype=float)
        return cls(float(nodes[0]), float(nodes[-1]), len(nodes), nodes)

    @classmethod
    def half_line(cls, length=DEFAULT_HALF_WIDTH, spacing=DEFAULT_SPACING):
        """Grid on ``[0, length]``."""
        n = int(round(length / spacing))
        nodes = spacing * np.arange(n + 1, dtype=float)
        return cls(0.0, float(nodes[-1]), len(nodes), nodes)

    @property
    def spacing(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def zero_index(self) -> int:
        i = int(np.argmin(np.abs(self.nodes)))
        if self.nodes[i] != 0.0:
            raise ValidationError("tau = 0 is not a grid node")
        return i

    @property
    def is_half_line(self) -> bool:
        return self.tau_min == 0.0

    def refined(self, factor=2):
        """Same extent with the spacing divided by ``factor``."""
        h = self.spacing / factor
        if self.is_half_line:
            return Grid1D.half_line(self.tau_max, h)
        return Grid1D.whole_line(spacing=h, tau_min=self.tau_min, tau_max=self.tau_max)

    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights."""
        w = np.full(self.n_points, self.spacing)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


@dataclass(frozen=True)
class FiberSolution:
    """Lowest eigenpair of a fiber operator on a grid."""

    a: float
    xi: float
    grid: Grid1D
    mu: float
    phi: np.ndarray = field(repr=False)
    phi_at_0: float
    dphi_at_0_left: float
    neumann: bool = False

    @property
    def tau(self):
        return self.grid.nodes

    def b(self):
        return b_profile(self.a, self.grid.nodes, neumann=self.neumann)

    def norm(self):
        return float(np.sqrt(np.sum(self.grid.weights() * self.phi**2)))


@dataclass(frozen=True)
class DeGennesConstants:
    """Constants of the de Gennes model."""

    theta0: float
    xi0: float
    c1: float
    u0_at_0: float
    mu_pp: float = float("nan")


@dataclass(frozen=True)
class EdgeConstants:
    """Band constants of the flat-edge model at field ratio ``a``."""

    a: float
    zeta_a: float
    beta_a: float
    mu_pp: float
    c2: float
    m3: float
    phi_at_0: float
    dphi_at_0: float


def b_profile(a, tau, neumann=False):
    """Field profile ``b_a``; equal to 1 at ``tau = 0``."""
    tau = np.asarray(tau, dtype=float)
    if neumann:
        return np.ones_like(tau)
    return np.where(tau >= 0.0, 1.0, a)


def default_grid(neumann=False, spacing=DEFAULT_SPACING, half_width=DEFAULT_HALF_WIDTH):
    if neumann:
        return Grid1D.half_line(half_width, spacing)
    return Grid1D.whole_line(half_width, spacing)


def _tridiagonal(a, xi, grid, neumann):
    """Symmetric tridiagonal matrix (diagonal, off-diagonal) on the unknowns."""
    h = grid.spacing
    tau = grid.nodes
    v = (xi + b_profile(a, tau, neumann) * tau) ** 2
    if neumann:
        # unknowns 0..n-2; ghost-node Neumann row symmetrized by sqrt(2)
        d = 2.0 / h**2 + v[:-1]
        e = np.full(len(d) - 1, -1.0 / h**2)
        e[0] = -np.sqrt(2.0) / h**2
    else:
        d = 2.0 / h**2 + v[1:-1]
        e = np.full(len(d) - 1, -1.0 / h**2)
    return d, e


def _lowest_eigenpair(d, e, index=0):
    e2 = e * e
    lo = float(np.min(d) - 2.0 * np.max(np.abs(e)))
    hi = float(np.min(d)) if index == 0 else float(np.max(d) + 2.0 * np.max(np.abs(e)))
    lam = kernels.bisect_eigenvalue(d, e2, index, lo, hi, 1e-16)
    x = np.ones_like(d)
    x /= np.linalg.norm(x)
    for _ in range(3):
        y = kernels.tridiag_shift_solve(d, e, lam, x)
        x = y / np.linalg.norm(y)
    return lam, x


def _fiber_from_vector(a, xi, grid, lam, v, neumann, decay_tol):
    h = grid.spacing
    n = grid.n_points
    phi = np.zeros(n)
    if neumann:
        phi[:-1] = v / np.sqrt(h)
        phi[0] *= np.sqrt(2.0)
    else:
        phi[1:-1] = v / np.sqrt(h)
    if phi[np.argmax(np.abs(phi))] < 0:
        phi = -phi
    norm = np.sqrt(np.sum(grid.weights() * phi**2))
    phi /= norm
    if np.min(phi) < -1e-8 * np.max(phi):
        raise NonPositiveGroundState(
            f"ground state changes sign (min {np.min(phi):.3e}) at a={a}, xi={xi}")
    ends = [abs(phi[-2])] if neumann else [abs(phi[1]), abs(phi[-2])]
    if max(ends) > decay_tol:
        raise GridTooNarrow(
            f"eigenfunction not decayed at grid ends ({max(ends):.2e} > {decay_tol:.0e})")
    if neumann:
        i0 = 0
        phi0 = float(phi[0])
        dphi0 = float((-3.0 * phi[0] + 4.0 * phi[1] - phi[2]) / (2.0 * h))
    else:
        i0 = grid.zero_index
        phi0 = float(phi[i0])
        dphi0 = float((3.0 * phi[i0] - 4.0 * phi[i0 - 1] + phi[i0 - 2]) / (2.0 * h))
    return FiberSolution(float(a), float(xi), grid, float(lam), phi, phi0, dphi0, neumann)


def solve_fiber(a, xi, grid=None, decay_tol=DEFAULT_DECAY_TOL):
    """Lowest eigenpair of ``-d^2 + (xi + b_a tau)^2`` on the whole line.

    Parameters
    ----------
    a : float
        Field ratio in ``[-1, 1]``.
    xi : float
        Frequency.
    grid : Grid1D, optional
        Whole-line grid containing 0; the default is ``[-30, 30]`` with
        spacing 0.004.
    decay_tol : float
        Bound on the normalized eigenfunction next to the Dirichlet ends.

    Returns
    -------
    FiberSolution
    """
    if not -1.0 <= a <= 1.0:
        raise ValidationError(f"field ratio a={a} outside [-1, 1]")
    grid = default_grid(False) if grid is None else grid
    grid.zero_index  # noqa: B018  (validates that 0 is a node)
    d, e = _tridiagonal(a, xi, grid, False)
    lam, v = _lowest_eigenpair(d, e)
    return _fiber_from_vector(a, xi, grid, lam, v, False, decay_tol)


def solve_neumann_fiber(xi, grid=None, decay_tol=DEFAULT_DECAY_TOL):
    """Lowest eigenpair of the de Gennes operator on ``[0, T]``.

    The Neumann condition at 0 uses the second-order ghost-node stencil; the
    far end carries a Dirichlet condition.
    """
    grid = default_grid(True) if grid is None else grid
    if not grid.is_half_line:
        raise ValidationError("Neumann fiber needs a half-line grid")
    d, e = _tridiagonal(1.0, xi, grid, True)
    lam, v = _lowest_eigenpair(d, e)
    return _fiber_from_vector(1.0, xi, grid, lam, v, True, decay_tol)


def second_eigenvalue(a, xi, grid=None, neumann=False):
    """Second eigenvalue of the discretized fiber operator (diagnostics)."""
    grid = default_grid(neumann) if grid is None else grid
    d, e = _tridiagonal(a, xi, grid, neumann)
    e2 = e * e
    lo = float(np.min(d) - 2.0 * np.max(np.abs(e)))
    hi = float(np.max(d) + 2.0 * np.max(np.abs(e)))
    return kernels.bisect_eigenvalue(d, e2, 1, lo, hi, 1e-16)


def _solve(a, xi, grid, neumann, decay_tol=DEFAULT_DECAY_TOL):
    if neumann:
        return solve_neumann_fiber(xi, grid, decay_tol)
    return solve_fiber(a, xi, grid, decay_tol)


def band_function(a, xi, grid=None, neumann=False):
    """``mu_a(xi)``, or the de Gennes band when ``neumann`` is set."""
    return _solve(a, xi, grid, neumann).mu


def fh_derivative(sol: FiberSolution) -> float:
    """Feynman-Hellmann derivative ``2 int (xi + b tau) phi^2``.

    On the grid this is the exact derivative of the discrete eigenvalue.
    """
    w = sol.grid.weights()
    return float(2.0 * np.sum(w * (sol.xi + sol.b() * sol.tau) * sol.phi**2))


def band_minimize(a, grid=None, neumann=False, window=DEFAULT_WINDOW,
                  step=DEFAULT_SCAN_STEP, zeta_guess=None):
    """Minimizer and minimum of the band function.

    A scan on ``window`` brackets the minimum, a bounded Brent search refines
    it, and a root solve of the Feynman-Hellmann derivative polishes it so
    that the discrete stationarity holds to rounding.

    Returns
    -------
    (zeta, beta) : tuple of float
    """
    if not neumann and not -1.0 <= a < 0.0:
        raise ValidationError(f"edge model needs a in [-1, 0), got {a}")
    grid = default_grid(neumann) if grid is None else grid
    if zeta_guess is not None:
        # a minimizer from a nearby grid only needs polishing
        try:
            return _polish(a, grid, neumann, float(zeta_guess))
        except BracketingFailed:
            pass
    xs = np.arange(window[0], window[1] + 0.5 * step, step)
    # the scan only brackets, so a coarse grid with the same extent suffices
    coarse = grid
    if grid.spacing < SCAN_SPACING:
        coarse = grid.refined(grid.spacing / SCAN_SPACING)
    mus = np.full(len(xs), np.inf)
    for j, x in enumerate(xs):
        try:
            mus[j] = _solve(a, x, coarse, neumann).mu
        except GridTooNarrow:
            pass  # well pushed off the grid; such points are not minima
    i = int(np.argmin(mus))
    if i == 0 or i == len(xs) - 1 or not np.all(np.isfinite(mus[i - 1:i + 2])):
        raise BracketingFailed(
            f"band minimum not interior to window {window} (a={a}, neumann={neumann})")
    lo, hi = xs[i - 1], xs[i + 1]
    res = optimize.minimize_scalar(lambda x: _solve(a, x, grid, neumann).mu,
                                   bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-9})
    try:
        return _polish(a, grid, neumann, float(res.x))
    except BracketingFailed:
        return float(res.x), float(res.fun)


def _polish(a, grid, neumann, x0):
    """Root of the Feynman-Hellmann derivative near ``x0``."""

    def dmu(x):
        return fh_derivative(_solve(a, x, grid, neumann))

    for width in (1e-4, 1e-3, 1e-2, 3e-2):
        l, r = x0 - width, x0 + width
        if dmu(l) < 0.0 < dmu(r):
            zeta = optimize.brentq(dmu, l, r, xtol=1e-14, rtol=1e-14)
            return float(zeta), float(_solve(a, zeta, grid, neumann).mu)
    raise BracketingFailed(f"no sign change of mu' near xi={x0}")


def band_second_derivative(a, zeta=None, grid=None, neumann=False, step=0.04):
    """``mu_a''(zeta_a)`` by central differences with Richardson extrapolation."""
    grid = default_grid(neumann) if grid is None else grid
    if zeta is None:
        zeta, _ = band_minimize(a, grid, neumann)

    def d2(hs):
        m = [_solve(a, zeta + s, grid, neumann).mu for s in (-hs, 0.0, hs)]
        return (m[0] - 2.0 * m[1] + m[2]) / hs**2

    val = (4.0 * d2(step / 2) - d2(step)) / 3.0
    if not val > 0.0:
        raise NonConvexAtMinimum(f"mu'' = {val:.3e} <= 0 at zeta={zeta}")
    return float(val)


def parabolic_second_derivative(a, zeta, grid=None, neumann=False, step=0.02):
    """``mu''`` from a least-squares quadratic through five points (cross-check)."""
    xs = zeta + step * np.arange(-2, 3)
    mus = [_solve(a, x, grid, neumann).mu for x in xs]
    c = np.polyfit(xs - zeta, mus, 4)
    return float(2.0 * c[2])


def de_gennes_constants(grid=None) -> DeGennesConstants:
    """Theta_0, xi_0, u_0(0) and C_1 = u_0(0)^2 / 3 of the de Gennes model."""
    grid = default_grid(True) if grid is None else grid
    xi0, theta0 = band_minimize(1.0, grid, neumann=True)
    sol = solve_neumann_fiber(xi0, grid)
    mu_pp = band_second_derivative(1.0, xi0, grid, neumann=True)
    u0 = sol.phi_at_0
    return DeGennesConstants(theta0, xi0, u0**2 / 3.0, u0, mu_pp)
