"""Order-3 WKB construction for the single-well edge operator.

The quasimode is ``Psi = hbar^{-1/8} exp(-i sigma zeta/hbar) exp(-Phi/hbar^{1/2})
sum_j b_j hbar^{j/2}`` with ``Phi`` the Agmon distance to the well ``s_r``.
Writing ``eps = hbar^{1/2}``, ``A = zeta + b tau`` and ``kappa = tau k``,
the conjugated operator is

    ``N = -a^{-1} d_tau a d_tau + a^{-1} Q a^{-1} Q``,
    ``Q = -A + eps i Phi' + eps^2 (-i d_sigma + (k/2) b tau^2)``,
    ``a = 1 - eps^2 kappa``,

and its expansion ``N = L0 + eps L1 + eps^2 L2 + eps^3 L3 + ...`` has

    ``L0 = -d^2 + A^2``,  ``L1 = -2 i Phi' A``,
    ``L2 = k Dc - 2 A q2 + 2 kappa A^2 - Phi'^2``,
    ``L3 = q1 q2 + q2 q1 - 4 i Phi' kappa A``,

with ``q1 = i Phi'``, ``q2 = -i d_sigma + (k/2) b tau^2`` and ``Dc`` the
central difference (the exact expansion of the three-point weighted stencil).

Profiles in ``sigma`` are smooth and ``hbar``-independent. They are sampled on
Chebyshev nodes of a window around the well and differentiated spectrally;
``tau`` is the three-point grid of the fiber operator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C

from . import model1d, moments
from .errors import (
    GridMismatch,
    OrderNotAvailable,
    SingularStartFailure,
    ValidationError,
    WeightNotPositive,
)
from .model1d import Grid1D
from .tunneling import EffectivePotential, effective_potential

MAX_ORDER = 3
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
# reference points of the Taylor-remainder integrals on [0, 1]
_T01 = 0.5 * (_GL_X + 1.0)
_W01 = 0.5 * _GL_W


def eta_hat(L):
    """Cutoff radius ``min(1/4, L/4) / 2``."""
    return 0.5 * min(0.25, 0.25 * L)


def wkb_grid(a, zeta, spacing=0.02, tail=35.0) -> Grid1D:
    """Fiber grid on which ``phi_a`` decays below ``exp(-tail)`` at both ends."""
    lo = -zeta / a - np.sqrt(2.0 * tail / abs(a))
    hi = -zeta + np.sqrt(2.0 * tail)
    return Grid1D.whole_line(spacing=spacing, tau_min=lo, tau_max=hi)


class _LocalCurvature:
    """Chebyshev proxy of ``k(s_r + x)`` on ``domain`` with exact derivatives."""

    def __init__(self, curve, center, domain, deg=200, tol=1e-12):
        self.center = float(center)
        self.series = C.Chebyshev.interpolate(
            lambda x: curve.curvature_at(self.center + x), deg, domain=list(domain))
        c = np.abs(self.series.coef)
        if np.max(c[-8:]) > tol * np.max(c):
            raise SingularStartFailure("curvature proxy did not converge near the well")
        self._der = [self.series]
        for _ in range(4):
            self._der.append(self._der[-1].deriv())

    def __call__(self, x, order=0):
        return self._der[order](x)


@dataclass
class Transport:
    """Transport data around ``s_r``: ``Phi``, ``|f0|`` and ``alpha0``.

    Parameters
    ----------
    K1, K2 : float
        Phase moments (see :func:`phase_moments`); zero gives ``F = 0``.
    """

    effpot: EffectivePotential
    K1: float = 0.0
    K2: float = 0.0
    domain: tuple = (0.0, 0.0)
    log_norm: float = 0.0
    _k: _LocalCurvature = field(default=None, repr=False)
    _int: dict = field(default=None, repr=False)

    @property
    def s_r(self):
        return self.effpot.curve.s_r

    @property
    def g(self):
        return self.effpot.g

    @property
    def mu_pp(self):
        return self.effpot.mu_pp

    # ``V = x^2 W(x)`` with ``W`` from the Taylor remainder (no cancellation at the well)
    def W(self, x, order=0):
        x = np.asarray(x, dtype=float)
        k = self._k(np.multiply.outer(x, _T01), 2 + order)
        return self.effpot.coef * np.sum(_W01 * (1.0 - _T01) * _T01**order * k, axis=-1)

    def dphi(self, x):
        """``Phi'`` as a function of ``x = sigma - s_r`` (sign of ``x``)."""
        return x * np.sqrt(self.W(x))

    def d2phi(self, x):
        w = self.W(x)
        return np.sqrt(w) + x * self.W(x, 1) / (2.0 * np.sqrt(w))

    def dlog_f(self, x):
        """``(g - Phi'') / (2 Phi')`` in a form that is regular at the well."""
        x = np.asarray(x, dtype=float)
        w = self.W(x)
        w1 = self.W(x, 1)
        u = np.multiply.outer(x, _T01)
        inner = np.sum(_W01 * self.W(u, 1) / (2.0 * np.sqrt(self.W(u))), axis=-1)
        return (-inner - w1 / (2.0 * np.sqrt(w))) / (2.0 * np.sqrt(w))

    def dalpha(self, x):
        """``alpha0' = (k K1 - 8 V K2) / mu''``."""
        x = np.asarray(x, dtype=float)
        v = x**2 * self.W(x)
        return (self._k(x) * self.K1 - 8.0 * v * self.K2) / self.mu_pp

    def phi(self, x):
        """``Phi = int_0^x Phi'``."""
        return self._int["phi"](x)

    def modulus(self, x):
        """``|f0|``, normalized by ``log_norm`` at the well."""
        return np.exp(self.log_norm + self._int["logf"](x))

    def alpha(self, x):
        return self._int["alpha"](x)

    def f0(self, x):
        return self.modulus(x) * np.exp(1j * self.alpha(x))

    def df0(self, x):
        return self.f0(x) * (self.dlog_f(x) + 1j * self.dalpha(x))

    def F(self, x):
        """``F = -Phi' (k K1 - 8 V K2)``, the real coupling of the transport equation."""
        return -self.mu_pp * self.dphi(x) * self.dalpha(x)


def _antiderivative(fun, domain, deg=200, tol=1e-12):
    """Chebyshev antiderivative of ``fun`` on ``domain`` vanishing at ``x = 0``."""
    series = C.Chebyshev.interpolate(fun, deg, domain=list(domain))
    c = np.abs(series.coef)
    if np.max(c[-8:]) > tol * max(np.max(c), 1e-300):
        raise SingularStartFailure("transport integrand is not resolved on the well interval")
    return series.integ(lbnd=0.0)


def _cumulative(fun, x, panel=0.05):
    """``int_0^x fun`` for each entry of ``x`` by composite Gauss-Legendre panels."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    for i, xi in enumerate(x.flat):
        if xi == 0.0:
            out.flat[i] = 0.0
            continue
        m = max(1, int(np.ceil(abs(xi) / panel)))
        edges = np.linspace(0.0, xi, m + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        nodes = (mid[:, None] + half[:, None] * _GL_X).ravel()
        out.flat[i] = float(np.sum(np.repeat(half, len(_GL_X)) * np.tile(_GL_W, m) * fun(nodes)))
    return out


def build_transport(effpot, K=(0.0, 0.0)) -> Transport:
    """Transport data between the two axis points around ``s_r``.

    The integrands of ``Phi``, ``log |f0|`` and ``alpha0`` are regular at the
    well once ``V = x^2 W(x)`` is factored, so they are represented by
    Chebyshev series on ``[0, L]`` and integrated exactly from ``s_r``.

    Raises
    ------
    SingularStartFailure
        If the well is degenerate (``V'' <= 0`` at ``s_r``).
    """
    curve = effpot.curve
    L, s_r = curve.half_length, curve.s_r
    domain = (-s_r, L - s_r)
    tr = Transport(effpot, float(K[0]), float(K[1]), domain)
    tr._k = _LocalCurvature(curve, s_r, domain)
    w0 = float(tr.W(0.0))
    if not w0 > 0 or not np.isfinite(w0):
        raise SingularStartFailure(f"V''(s_r)/2 = {w0:.3e}: the well is degenerate")
    if abs(np.sqrt(w0) - effpot.g) > 1e-6 * effpot.g:
        raise SingularStartFailure("local well frequency disagrees with the effective potential")
    tr.log_norm = 0.25 * np.log(effpot.g / np.pi)
    tr._int = {"phi": _antiderivative(tr.dphi, domain),
               "logf": _antiderivative(tr.dlog_f, domain),
               "alpha": _antiderivative(tr.dalpha, domain)}
    return tr


def transport_amplitude(effpot, sigma, normalization="well", K=None, A_u=None):
    """Modulus and phase of the transport solution at arc coordinates ``sigma``.

    Parameters
    ----------
    normalization : {"well", "axis"}
        ``"well"``: ``|f0|(s_r) = (g/pi)^{1/4}``. ``"axis"``:
        ``|f0|(0) = (g/pi)^{1/4} A_u^{1/2}``, with ``A_u`` from
        :func:`magstep.tunneling.agmon` unless given. The two agree when the
        prefactor is read from the well to the axis point.
    K : (float, float), optional
        Phase moments; ``None`` forces ``F = 0`` and a constant phase.

    Returns
    -------
    (modulus, alpha0) : tuple of ndarray
        ``alpha0`` vanishes at ``s_r``.
    """
    tr = build_transport(effpot, (0.0, 0.0) if K is None else K)
    x = np.asarray(sigma, dtype=float) - tr.s_r
    mod = tr.modulus(x)
    if normalization == "axis":
        if A_u is None:
            from .tunneling import agmon

            A_u = agmon(effpot).A_u
        target = 0.25 * np.log(effpot.g / np.pi) + 0.5 * np.log(A_u)
        mod = mod * np.exp(target - np.log(tr.modulus(np.array([-tr.s_r]))[0]))
    elif normalization != "well":
        raise ValidationError(f"unknown normalization {normalization!r}")
    return mod, tr.alpha(x)


def phase_moments(ctx: moments.ResolventContext):
    """``(K1, K2)`` entering ``alpha0' = (k K1 - 8 V K2)/mu''``.

    ``K1 = -<b tau^2 phi, phi> + 4 <tau A phi, phi> + 4 <w1, (A b tau^2 - 2 tau A^2) phi>``
    and ``K2 = <A w1, w1>`` with ``w1 = R(A phi)``.
    """
    tau, phi = ctx.tau, ctx.phi
    b = model1d.b_profile(ctx.fiber.a, tau)
    A = ctx.fiber.xi + b * tau
    w1 = moments.regularized_apply(ctx, A * phi)
    K1 = (-ctx.inner(b * tau**2 * phi, phi) + 4.0 * ctx.inner(tau * A * phi, phi)
          + 4.0 * ctx.inner(w1, (A * b * tau**2 - 2.0 * tau * A**2) * phi))
    K2 = ctx.inner(A * w1, w1)
    return float(K1), float(K2)


def compute_F(constants, ctx, curve, sigma):
    """``F(sigma)`` on arc coordinates ``sigma`` near ``s_r``.

    ``F`` vanishes at the well to first order: the factor ``Phi'`` is explicit
    and ``k K1 - 8 V K2`` does not vanish there.
    """
    effpot = effective_potential(constants, curve)
    tr = build_transport(effpot, phase_moments(ctx))
    return tr.F(np.asarray(sigma, dtype=float) - tr.s_r)


def alpha_profile(effpot, K, sigma, s0=0.0):
    """``alpha0(sigma) - alpha0(s0)`` using the true curvature (both wells)."""
    curve = effpot.curve
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))

    def dalpha(s):
        k = curve.curvature_at(s)
        return (k * K[0] - 8.0 * effpot(s) * K[1]) / effpot.mu_pp

    return _cumulative(lambda x: dalpha(s0 + x), sigma - s0)


def alpha_constant(sigma, alpha0, L):
    """``(alpha0(0) - alpha0(-L)) / L`` from a profile containing both points."""
    sigma = np.asarray(sigma, dtype=float)
    i0 = np.flatnonzero(np.isclose(sigma, 0.0, atol=1e-12))
    iL = np.flatnonzero(np.isclose(sigma, -L, atol=1e-12))
    if len(i0) == 0 or len(iL) == 0:
        raise ValidationError("alpha profile must contain sigma = 0 and sigma = -L")
    return float((alpha0[i0[0]] - alpha0[iL[0]]) / L)


def alpha_a(effpot, K):
    """``alpha_a`` for the curve of ``effpot``."""
    L = effpot.curve.half_length
    s = np.array([-L, 0.0])
    return alpha_constant(s, alpha_profile(effpot, K, s), L)


@dataclass
class WKBSetup:
    """Fiber data, effective potential and transport on a fiber grid."""

    constants: model1d.EdgeConstants
    ctx: moments.ResolventContext
    effpot: EffectivePotential
    transport: Transport
    K: tuple
    I2: float

    @property
    def tau(self):
        return self.ctx.tau

    @property
    def delta(self):
        c = self.constants
        d3 = np.sqrt(self.effpot.curve.k2 * c.m3 * c.c2 / 2.0)
        return [c.beta_a, 0.0, c.m3 * self.effpot.curve.k_max, float(d3)]


def prepare(a_or_constants, curve, grid=None) -> WKBSetup:
    """Constants, resolvent and transport on the WKB fiber grid."""
    if isinstance(a_or_constants, WKBSetup):
        return a_or_constants
    a = getattr(a_or_constants, "a", a_or_constants)
    zeta0 = getattr(a_or_constants, "zeta_a", None)
    if grid is None:
        z = zeta0 if zeta0 is not None else moments.edge_constants(a).zeta_a
        grid = wkb_grid(a, z)
    constants = moments.edge_constants(a, grid, zeta_guess=zeta0)
    ctx = moments.resolvent_context(a, grid, constants)
    effpot = effective_potential(constants, curve)
    K = phase_moments(ctx)
    tau = ctx.tau
    A = constants.zeta_a + model1d.b_profile(a, tau) * tau
    I2 = ctx.inner(A * ctx.phi, moments.regularized_apply(ctx, A * ctx.phi))
    return WKBSetup(constants, ctx, effpot, build_transport(effpot, K), K, float(I2))


@dataclass
class QuasiMode:
    """Truncated WKB quasimode on Chebyshev nodes around ``s_r``.

    ``b_profiles[j]`` has shape ``(len(sigma), len(tau))``.
    """

    order: int
    hbar: float
    sigma: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)
    delta: list
    Phi: np.ndarray = field(repr=False)
    f0: np.ndarray = field(repr=False)
    alpha0: np.ndarray = field(repr=False)
    b_profiles: list = field(repr=False)
    window: tuple = (0.0, 0.0)
    setup: WKBSetup = field(default=None, repr=False)

    def delta_sum(self):
        e = np.sqrt(self.hbar)
        return float(sum(d * e**j for j, d in enumerate(self.delta[: self.order + 1])))

    def amplitude(self):
        """``sum_j b_j hbar^{j/2}`` (without the exponential factors)."""
        e = np.sqrt(self.hbar)
        return sum(b * e**j for j, b in enumerate(self.b_profiles[: self.order + 1]))

    def profile_rows(self):
        """Rows ``(sigma, |f0|, alpha0, Phi)`` for export."""
        return np.column_stack([self.sigma, np.abs(self.f0), self.alpha0, self.Phi])


class _Cheb:
    """Values on Chebyshev points of ``[c - r, c + r]`` and spectral derivatives."""

    def __init__(self, center, radius, m):
        self.center, self.radius, self.m = center, radius, m
        self.t = np.cos(np.pi * (np.arange(m) + 0.5) / m)[::-1]
        self.x = radius * self.t

    def deriv(self, values, order=1):
        coef = C.chebfit(self.t, values, self.m - 1)
        d = C.chebder(coef, order, scl=1.0 / self.radius, axis=0)
        return C.chebval(self.t, d).T if values.ndim > 1 else C.chebval(self.t, d)


def _dc(u, h):
    out = np.zeros_like(u)
    out[..., 1:-1] = (u[..., 2:] - u[..., :-2]) / (2.0 * h)
    return out


def _d2(u, h):
    out = np.zeros_like(u)
    out[..., 1:-1] = (u[..., 2:] - 2.0 * u[..., 1:-1] + u[..., :-2]) / h**2
    return out


def _resolve(ctx, rhs):
    return np.array([moments.regularized_apply(ctx, row) for row in rhs])


def _profiles(setup: WKBSetup, cheb: _Cheb, order):
    """``b_0 .. b_order`` at the Chebyshev nodes."""
    ctx, tr = setup.ctx, setup.transport
    tau, phi, h = ctx.tau, ctx.phi, ctx.grid.spacing
    b = model1d.b_profile(ctx.fiber.a, tau)
    A = ctx.fiber.xi + b * tau
    x = cheb.x
    f0, df0 = tr.f0(x), tr.df0(x)
    dphi, d2phi = tr.dphi(x), tr.d2phi(x)
    k = tr._k(x)
    col = lambda v: np.asarray(v)[:, None]  # noqa: E731

    w1 = moments.regularized_apply(ctx, A * phi)
    bs = [col(f0) * phi]
    if order >= 1:
        bs.append(col(2j * dphi * f0) * w1)
    if order >= 2:
        g = _dc(phi, h) - A * b * tau**2 * phi + 2.0 * tau * A**2 * phi
        Rg = moments.regularized_apply(ctx, g)
        RAw = moments.regularized_apply(ctx, A * w1)
        bs.append(-col(k * f0) * Rg - col(2j * df0) * w1 - col(4.0 * dphi**2 * f0) * RAw)
    if order >= 3:
        d = setup.delta
        b0, b1, b2 = bs
        db0 = col(df0) * phi
        db1 = cheb.deriv(b1)
        q2b1 = -1j * db1 + col(0.5 * k) * b * tau**2 * b1
        L3b0 = (2.0 * col(dphi) * db0 + col(d2phi) * b0 + 1j * col(dphi * k) * b * tau**2 * b0
                - 4j * col(dphi * k) * tau * A * b0)
        L2b1 = (col(k) * _dc(b1, h) - 2.0 * A * q2b1 + 2.0 * col(k) * tau * A**2 * b1
                - col(dphi**2) * b1)
        L1b2 = -2j * col(dphi) * A * b2
        rhs = (d[3] * b0 - L3b0) + (d[2] * b1 - L2b1) - L1b2
        bs.append(_resolve(ctx, rhs))
        setup_defect = np.array([abs(ctx.inner(phi, r.real) + 1j * ctx.inner(phi, r.imag))
                                 for r in rhs])
        cheb.solvability_defect = float(np.max(setup_defect))
    return bs


def assemble_quasimode(constants, curve, hbar, N, window=None, nodes=40) -> QuasiMode:
    """WKB quasimode of order ``N`` at ``hbar``.

    Parameters
    ----------
    constants : EdgeConstants, float or WKBSetup
        Field ratio data; a :class:`WKBSetup` is reused as is.
    window : float, optional
        Radius of the ``sigma`` window around ``s_r`` (default ``eta_hat(L)``).
    """
    if not 0 <= N <= MAX_ORDER:
        raise OrderNotAvailable(f"order {N} not available (0..{MAX_ORDER})")
    if not hbar > 0:
        raise ValidationError("hbar must be positive")
    setup = prepare(constants, curve)
    tr = setup.transport
    L = tr.effpot.curve.half_length
    radius = eta_hat(L) if window is None else float(window)
    cheb = _Cheb(tr.s_r, radius, nodes)
    bs = _profiles(setup, cheb, N)
    qm = QuasiMode(N, float(hbar), tr.s_r + cheb.x, setup.tau, setup.delta, tr.phi(cheb.x),
                   tr.f0(cheb.x), tr.alpha(cheb.x), bs, (tr.s_r - radius, tr.s_r + radius),
                   setup)
    qm._cheb = cheb
    return qm


@dataclass
class ConjugatedOperator:
    """``exp(Phi/eps) exp(i sigma zeta/hbar) N exp(-i sigma zeta/hbar) exp(-Phi/eps)``
    on the fiber grid, with the cutoff ``c_mu = 1`` on the window."""

    tau: np.ndarray = field(repr=False)
    a: float = -0.5
    zeta: float = 0.0
    transport: Transport = field(default=None, repr=False)

    @classmethod
    def from_setup(cls, setup: WKBSetup):
        return cls(setup.tau, setup.constants.a, setup.constants.zeta_a, setup.transport)

    def apply(self, u, du, ddu, x, hbar):
        tau = self.tau
        h = tau[1] - tau[0]
        tr = self.transport
        eps = np.sqrt(hbar)
        b = model1d.b_profile(self.a, tau)
        A = self.zeta + b * tau
        col = lambda v: np.asarray(v)[:, None]  # noqa: E731
        k, dk = col(tr._k(x)), col(tr._k(x, 1))
        dphi, d2phi = col(tr.dphi(x)), col(tr.d2phi(x))
        wt = 1.0 - hbar * tau * k
        if np.min(wt) <= 0:
            raise WeightNotPositive("1 - hbar tau k vanishes on the fiber grid")
        tau_m = 0.5 * (tau[1:] + tau[:-1])
        wt_m = 1.0 - hbar * tau_m * k
        flux = wt_m * np.diff(u, axis=-1) / h
        out = np.zeros_like(u)
        out[:, 1:-1] = -np.diff(flux, axis=-1) / h / wt[:, 1:-1]
        P = -A + eps * 1j * dphi + hbar * 0.5 * k * b * tau**2
        dP = eps * 1j * d2phi + hbar * 0.5 * dk * b * tau**2
        v = P * u - 1j * hbar * du
        dv = dP * u + P * du - 1j * hbar * ddu
        w = v / wt
        dw = hbar * tau * dk / wt**2 * v + dv / wt
        out[:, 1:-1] += ((P * w - 1j * hbar * dw) / wt)[:, 1:-1]
        return out


def residual_norm(qm: QuasiMode, op: ConjugatedOperator = None):
    """Weighted residual ``hbar^{-1/8} || (N - delta^N(hbar)) sum b_j hbar^{j/2} ||_{L^2_tau}``.

    Returns
    -------
    dict
        ``sigma``, ``profile`` (one value per node), ``sup`` and the window.
    """
    if op is None:
        op = ConjugatedOperator.from_setup(qm.setup)
    if op.tau.shape != qm.tau.shape or np.max(np.abs(op.tau - qm.tau)) > 1e-12:
        raise GridMismatch("operator and quasimode fiber grids differ")
    cheb = qm._cheb
    u = qm.amplitude()
    du = cheb.deriv(u)
    ddu = cheb.deriv(u, 2)
    r = op.apply(u, du, ddu, cheb.x, qm.hbar) - qm.delta_sum() * u
    w = qm.setup.ctx.grid.weights()
    prof = qm.hbar ** -0.125 * np.sqrt(np.sum(w * np.abs(r) ** 2, axis=1))
    return {"sigma": qm.sigma, "profile": prof, "sup": float(np.max(prof)),
            "window": qm.window}


def residual_slopes(setup, curve, hbars, orders=(0, 1, 3), window=None):
    """Log-log slopes of the sup residual against ``hbar`` for each order."""
    hbars = np.asarray(hbars, dtype=float)
    out = {}
    for N in orders:
        res = [residual_norm(assemble_quasimode(setup, curve, hb, N, window))["sup"]
               for hb in hbars]
        slope = np.polyfit(np.log(hbars), np.log(res), 1)[0]
        out[N] = {"slope": float(slope), "residuals": res}
    return out


def leading_norm(setup: WKBSetup, hbar, panels=64):
    """``||Psi^0||`` by quadrature between the two axis points around ``s_r``."""
    tr = setup.transport
    L = tr.effpot.curve.half_length
    edges = np.linspace(-tr.s_r, L - tr.s_r, panels + 1)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    x = (mid[:, None] + half[:, None] * _GL_X).ravel()
    wts = (half[:, None] * _GL_W).ravel()
    dens = tr.modulus(x) ** 2 * np.exp(-2.0 * tr.phi(x) / np.sqrt(hbar))
    return float(np.sqrt(hbar ** -0.25 * np.sum(wts * dens)))
