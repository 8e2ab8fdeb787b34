"""Regularized resolvent, moments and their identities for the flat-edge model."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import model1d
from .errors import InvariantViolation, SingularSystem, UnsupportedMoment, ValidationError
from .model1d import EdgeConstants, FiberSolution, Grid1D


@dataclass
class ResolventContext:
    """Fiber ground state at the band minimum plus a factorized bordered system."""

    constants: EdgeConstants
    fiber: FiberSolution
    _lu: object = field(repr=False, default=None)

    @property
    def grid(self) -> Grid1D:
        return self.fiber.grid

    @property
    def tau(self):
        return self.fiber.grid.nodes

    @property
    def phi(self):
        return self.fiber.phi

    def inner(self, u, v):
        """Trapezoid inner product on the grid."""
        return float(np.sum(self.grid.weights() * u * v))

    def project(self, u):
        """Remove the ``phi`` component."""
        return u - self.inner(self.phi, u) * self.phi


class _DeflatedSolver:
    """Solve ``(T - mu) x = u`` for ``u`` orthogonal to the null vector ``phi``.

    The equation at the peak of ``phi`` is dropped and ``x`` is pinned to 0
    there; the two remaining principal blocks are positive definite and are
    factored with banded Cholesky. The dropped equation holds by consistency.
    """

    def __init__(self, diag, off, k):
        self.k = k
        self.n = len(diag)
        self._blocks = []
        for lo, hi in ((0, k), (k + 1, self.n)):
            if hi - lo == 0:
                self._blocks.append(None)
                continue
            ab = np.zeros((2, hi - lo))
            ab[0, 1:] = off[lo:hi - 1]
            ab[1] = diag[lo:hi]
            try:
                self._blocks.append((lo, hi, linalg.cholesky_banded(ab)))
            except linalg.LinAlgError as exc:
                raise SingularSystem(f"deflated block not positive definite: {exc}") from exc

    def solve(self, u):
        x = np.zeros(self.n)
        for blk in self._blocks:
            if blk is not None:
                lo, hi, cb = blk
                x[lo:hi] = linalg.cho_solve_banded((cb, False), u[lo:hi])
        return x


def _bordered_lu(fiber: FiberSolution):
    grid = fiber.grid
    h = grid.spacing
    tau = grid.nodes[1:-1]
    b = model1d.b_profile(fiber.a, tau)
    n = len(tau)
    diag = 2.0 / h**2 + (fiber.xi + b * tau) ** 2 - fiber.mu
    off = np.full(n - 1, -1.0 / h**2)
    return _DeflatedSolver(diag, off, int(np.argmax(fiber.phi[1:-1])))


def resolvent_context(a, grid=None, constants=None) -> ResolventContext:
    """Build the resolvent context at the band minimum of ``h_a``."""
    if constants is None:
        constants = edge_constants(a, grid)
    grid = model1d.default_grid() if grid is None else grid
    fiber = model1d.solve_fiber(a, constants.zeta_a, grid)
    ctx = ResolventContext(constants, fiber)
    ctx._lu = _bordered_lu(fiber)
    return ctx


def regularized_apply(ctx: ResolventContext, u):
    """``R_a u``: inverse of ``h_a[zeta_a] - beta_a`` on ``phi_a``-perp, 0 on ``phi_a``.

    Parameters
    ----------
    ctx : ResolventContext
    u : ndarray
        Grid function on the fiber grid (real or complex).

    Returns
    -------
    ndarray
        Result orthogonal to ``phi_a``, zero at the grid ends.
    """
    u = np.asarray(u)
    if u.shape != ctx.tau.shape:
        raise ValidationError("grid function does not match the resolvent grid")
    if np.iscomplexobj(u):
        return regularized_apply(ctx, u.real) + 1j * regularized_apply(ctx, u.imag)
    up = ctx.project(u)
    sol = ctx._lu.solve(up[1:-1])
    if not np.all(np.isfinite(sol)):
        raise SingularSystem("deflated solve produced non-finite values")
    out = np.zeros_like(up)
    out[1:-1] = sol
    return ctx.project(out)


def apply_fiber_operator(ctx: ResolventContext, u):
    """``(h_a[zeta_a] - beta_a) u`` with the discrete three-point stencil."""
    h = ctx.grid.spacing
    tau = ctx.tau
    b = model1d.b_profile(ctx.fiber.a, tau)
    out = np.zeros_like(u)
    out[1:-1] = (-(u[2:] - 2.0 * u[1:-1] + u[:-2]) / h**2
                 + ((ctx.fiber.xi + b[1:-1] * tau[1:-1]) ** 2 - ctx.fiber.mu) * u[1:-1])
    return out


def inverse_b(a, tau):
    """``1/b_a`` with the average ``(1 + 1/a)/2`` at ``tau = 0``."""
    tau = np.asarray(tau, dtype=float)
    out = np.where(tau > 0.0, 1.0, 1.0 / a)
    return np.where(tau == 0.0, 0.5 * (1.0 + 1.0 / a), out)


def moment(ctx: ResolventContext, n: int) -> float:
    """``M_n = int (1/b_a) (zeta_a + b_a tau)^n phi_a^2`` for ``n`` in {1, 2, 3}."""
    if n not in (1, 2, 3):
        raise UnsupportedMoment(f"moment order {n} not supported (1, 2 or 3)")
    return _moment(ctx.fiber, n)


def _moment(fiber: FiberSolution, n: int) -> float:
    tau = fiber.tau
    b = model1d.b_profile(fiber.a, tau)
    f = inverse_b(fiber.a, tau) * (fiber.xi + b * tau) ** n * fiber.phi**2
    return float(np.sum(fiber.grid.weights() * f))


@dataclass
class MomentReport:
    """Moments, ``I_2`` and the residuals of the moment identities."""

    a: float
    m: dict
    i2: float
    inv_b_mass: float
    identity_residuals: dict
    spacing: float = float("nan")
    printed_residuals: dict = field(default_factory=dict)

    def max_residual(self, exclude=()):
        return max(abs(v) for k, v in self.identity_residuals.items() if k not in exclude)

    def to_dict(self):
        return {"a": self.a, "m": {str(k): v for k, v in self.m.items()}, "i2": self.i2,
                "inv_b_mass": self.inv_b_mass, "spacing": self.spacing,
                "identity_residuals": dict(self.identity_residuals),
                "printed_residuals": dict(self.printed_residuals)}


def identity_suite(ctx: ResolventContext, mu_pp=None) -> MomentReport:
    """Evaluate both sides of the moment identities on the context grid.

    Residual names: ``stationarity``, ``m1``, ``m2``, ``m3_closed``, the five
    follow-on identities ``tau_A``, ``tau_A2``, ``b_tau2_A``, ``tau``,
    ``tau_dphi2``, plus ``i2`` and, at ``a = -1``, ``m3_zero``.

    The ``m2`` and ``tau_dphi2`` residuals use the forms obtained by
    integrating the eigenvalue equation against ``(A/b^2) phi'`` and
    ``tau phi``:

    * ``M_2 = beta/2 int phi^2/b + (1/a - 1) phi(0) phi'(0) / 4``
    * ``int tau phi'^2 = zeta M_2 - M_3 - beta zeta int phi^2/b``

    ``printed_residuals`` holds the variants with ``-beta/2`` and an extra
    ``zeta`` factor, and with ``beta zeta int phi^2/b + 2 M_3 - 2 zeta M_2``;
    those do not vanish for ``a > -1``.
    """
    f = ctx.fiber
    a, zeta, beta = f.a, f.xi, f.mu
    tau, phi = ctx.tau, ctx.phi
    w = ctx.grid.weights()
    h = ctx.grid.spacing
    b = model1d.b_profile(a, tau)
    A = zeta + b * tau
    mu_pp = ctx.constants.mu_pp if mu_pp is None else mu_pp

    def integ(g):
        return float(np.sum(w * g))

    m1, m2, m3 = (_moment(f, n) for n in (1, 2, 3))
    j0 = integ(inverse_b(a, tau) * phi**2)
    edge = (1.0 / a - 1.0) * zeta * f.phi_at_0 * f.dphi_at_0_left
    mid = 0.5 * (tau[1:] + tau[:-1])
    dphi = np.diff(phi) / h
    tau_dphi2 = float(np.sum(h * mid * dphi**2))
    u = A * phi
    i2 = ctx.inner(u, regularized_apply(ctx, u))
    res = {
        "stationarity": integ(A * phi**2),
        "m1": m1,
        "m2": m2 - (0.5 * beta * j0 + 0.25 * edge / zeta),
        "m3_closed": m3 - edge / 3.0,
        "tau_A": integ(tau * A * phi**2) - m2,
        "tau_A2": integ(tau * A**2 * phi**2) - (m3 - zeta * m2),
        "b_tau2_A": integ(b * tau**2 * A * phi**2) - (m3 - 2.0 * zeta * m2),
        "tau": integ(tau * phi**2) + zeta * j0,
        "tau_dphi2": tau_dphi2 - (zeta * m2 - m3 - beta * zeta * j0),
        "i2": i2 - (0.25 - mu_pp / 8.0),
    }
    # as-printed variants of the M2 and tau |phi'|^2 identities (diagnostic)
    printed = {
        "m2": m2 - (-0.5 * beta * j0 + 0.25 * edge),
        "tau_dphi2": tau_dphi2 - (beta * zeta * j0 + 2.0 * m3 - 2.0 * zeta * m2),
    }
    if a == -1.0:
        res["m3_zero"] = m3
    return MomentReport(a, {1: m1, 2: m2, 3: m3}, i2, j0, res, h, printed)


def converged_identity_suite(a, grid=None, levels=3) -> MomentReport:
    """Identity suite Richardson-extrapolated over successive grid halvings.

    Each residual is evaluated on ``levels`` grids with spacings ``h``,
    ``h/2``, ... and extrapolated assuming an expansion in ``h^2, h^3``.
    """
    grid = model1d.default_grid() if grid is None else grid
    reports = []
    g = grid
    guess = None
    for _ in range(levels):
        c = edge_constants(a, g, zeta_guess=guess)
        ctx = resolvent_context(a, g, constants=c)
        reports.append(identity_suite(ctx))
        guess = c.zeta_a
        g = g.refined(2)
    keys = reports[0].identity_residuals.keys()
    res = {k: richardson([r.identity_residuals[k] for r in reports]) for k in keys}
    printed = {k: richardson([r.printed_residuals[k] for r in reports])
               for k in reports[0].printed_residuals}
    m = {n: richardson([r.m[n] for r in reports]) for n in (1, 2, 3)}
    i2 = richardson([r.i2 for r in reports])
    j0 = richardson([r.inv_b_mass for r in reports])
    return MomentReport(a, m, i2, j0, res, 0.0, printed)


def richardson(values, orders=(2, 3)):
    """Extrapolate a sequence computed at spacings ``h, h/2, h/4, ...``."""
    v = list(values)
    for p in orders[: len(v) - 1]:
        f = 2.0**p
        v = [(f * v[i + 1] - v[i]) / (f - 1.0) for i in range(len(v) - 1)]
    return float(v[-1])


def edge_constants(a, grid=None, window=model1d.DEFAULT_WINDOW,
                   zeta_guess=None) -> EdgeConstants:
    """Band minimum, curvature and third moment at field ratio ``a``.

    Raises
    ------
    InvariantViolation
        If any structural bound on the constants fails.
    """
    if not -1.0 <= a < 0.0:
        raise ValidationError(f"edge constants need a in [-1, 0), got {a}")
    grid = model1d.default_grid() if grid is None else grid
    zeta, beta = model1d.band_minimize(a, grid, window=window, zeta_guess=zeta_guess)
    mu_pp = model1d.band_second_derivative(a, zeta, grid)
    fiber = model1d.solve_fiber(a, zeta, grid)
    m3 = _moment(fiber, 3)
    c = EdgeConstants(a, zeta, beta, mu_pp, mu_pp / 2.0, m3, fiber.phi_at_0,
                      fiber.dphi_at_0_left)
    check_edge_constants(c)
    return c


def check_edge_constants(c: EdgeConstants, m3_tol=1e-6):
    """Raise :class:`InvariantViolation` unless the structural bounds hold."""
    problems = []
    if not c.zeta_a < 0:
        problems.append("zeta_a >= 0")
    if not c.mu_pp > 0:
        problems.append("mu'' <= 0")
    if c.a > -1.0:
        theta0 = _theta0()
        if not abs(c.a) * theta0 < c.beta_a < min(abs(c.a), theta0):
            problems.append("beta_a outside (|a| Theta0, min(|a|, Theta0))")
        if not c.dphi_at_0 < 0:
            problems.append("phi'(0) >= 0")
        if not c.m3 < 0:
            problems.append("M3 >= 0")
    elif abs(c.m3) > m3_tol:
        problems.append("M3(-1) != 0")
    if problems:
        raise InvariantViolation("; ".join(problems))


_THETA0 = []


def _theta0():
    if not _THETA0:
        _THETA0.append(model1d.de_gennes_constants().theta0)
    return _THETA0[0]
