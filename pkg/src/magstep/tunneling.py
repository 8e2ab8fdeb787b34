"""Effective potential, Agmon actions and closed-form splitting predictions.

Conventions follow :mod:`magstep.geometry`: ``s = 0`` and ``s = L`` are the
axis points, ``s_r > 0`` and ``s_ell = -s_r`` the wells. The "u" path joins
the wells through ``s = 0`` and the "d" path through ``s = L``.

Prefactor integrals are read as oriented integrals from a well to an axis
point. With ``x`` the distance from the well along the path,

    ``A = exp(int_0^X (g - d sqrt(V)/dx) / sqrt(V) dx)``,

which is finite because ``sqrt(V) ~ g x`` at the well.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConstants,
    NegativePotential,
    QuadratureNotConverged,
    SymmetryViolation,
    ValidationError,
)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass
class EffectivePotential:
    """``V(s) = coef (k(s) - k_max)`` on a curve, with its well frequency ``g``.

    ``coef = 2 M_3 / mu''`` for the magnetic step and ``-2 C_1 / mu''(xi_0)``
    for the Neumann problem; both are negative so that ``V >= 0``.
    """

    curve: object
    coef: float
    provenance: str
    mu_pp: float
    zeta: float
    beta: float
    samples: np.ndarray = field(repr=False)
    g: float = float("nan")

    @property
    def s(self):
        return self.curve.s

    @property
    def wells(self):
        return {"s_r": self.curve.s_r, "s_ell": self.curve.s_ell}

    def __call__(self, s):
        k = self.curve.curvature_at(s)
        return np.maximum(self.coef * (k - self.curve.k_max), 0.0)

    def sqrt(self, s):
        return np.sqrt(self(s))

    def dsqrt(self, s, step=1e-4):
        """``(V^{1/2})'`` by a centered difference, valid away from the wells."""
        return (self.sqrt(np.asarray(s) + step) - self.sqrt(np.asarray(s) - step)) / (2 * step)

    def scaled(self, factor):
        """Same curve with ``V`` multiplied by ``factor``."""
        return EffectivePotential(self.curve, self.coef * factor, self.provenance,
                                  self.mu_pp, self.zeta, self.beta, self.samples * factor,
                                  self.g * np.sqrt(factor))


def effective_potential(constants, curve, neg_tol=1e-12) -> EffectivePotential:
    """Sample the effective potential on the curve's arc grid.

    ``constants`` is an :class:`~magstep.model1d.EdgeConstants` (magnetic step)
    or a :class:`~magstep.model1d.DeGennesConstants` (Neumann).

    Raises
    ------
    DegenerateConstants
        If ``M_3`` vanishes (``a = -1``), so ``V`` is identically zero.
    NegativePotential
        If any sample is below ``-neg_tol``.
    """
    if hasattr(constants, "m3"):
        if abs(constants.m3) < 1e-6:
            raise DegenerateConstants(f"M3 = {constants.m3:.2e}: effective potential vanishes")
        coef = 2.0 * constants.m3 / constants.mu_pp
        prov, mu_pp, zeta, beta = "magnetic-step", constants.mu_pp, constants.zeta_a, constants.beta_a
    else:
        coef = -2.0 * constants.c1 / constants.mu_pp
        prov, mu_pp, zeta, beta = "neumann", constants.mu_pp, constants.xi0, constants.theta0
    if not curve.wells:
        raise ValidationError("curve wells have not been validated")
    raw = coef * (curve.k - curve.k_max)
    if np.min(raw) < -neg_tol * max(1.0, np.max(np.abs(raw))):
        raise NegativePotential(f"effective potential reaches {np.min(raw):.3e}")
    v2 = coef * curve.k2
    g = float(np.sqrt(v2 / 2.0))
    return EffectivePotential(curve, coef, prov, mu_pp, zeta, beta, np.maximum(raw, 0.0), g)


def local_frequency_fit(effpot, well, width=0.02, n=9):
    """``g`` from a quadratic least-squares fit of ``V`` around a well."""
    x = np.linspace(-width, width, n)
    c = np.polyfit(x, effpot(well + x), 4)
    return float(np.sqrt(c[2]))


# --- quadrature helpers ----------------------------------------------------

def _panels(a, b, n, graded_end=None, levels=0):
    """Panel edges on [a, b]; geometric refinement toward ``graded_end``."""
    edges = np.linspace(a, b, n + 1)
    if graded_end is None or levels == 0:
        return edges
    first = graded_end == a
    h = (b - a) / n
    if first:
        inner = a + h * 0.5 ** np.arange(levels, 0, -1)
        return np.concatenate([[a], inner, edges[1:]])
    inner = b - h * 0.5 ** np.arange(1, levels + 1)
    return np.concatenate([edges[:-1], inner, [b]])


def _gauss(f, edges):
    lo, hi = edges[:-1, None], edges[1:, None]
    x = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * _GL_WEIGHTS
    return float(np.sum(w * f(x)))


def _converged(f, a, b, n=16, graded_end=None, levels=0, rtol=1e-6, what="integral"):
    """Gauss panels at ``n`` and ``2n``; raise if they disagree beyond ``rtol``."""
    coarse = _gauss(f, _panels(a, b, n, graded_end, levels))
    fine = _gauss(f, _panels(a, b, 2 * n, graded_end, levels))
    if abs(fine - coarse) > rtol * max(abs(fine), 1e-300) and abs(fine - coarse) > 1e-12:
        raise QuadratureNotConverged(
            f"{what}: panel refinement changed the value by {abs(fine - coarse):.2e}")
    return fine


def action(effpot, s0, s1, n=16):
    """``int_{s0}^{s1} sqrt(V) ds`` (``s0 < s1``)."""
    return _converged(effpot.sqrt, s0, s1, n=n, what="Agmon action")


def _prefactor_log(effpot, well, end, rtol=1e-6):
    """``int_0^X (g - d sqrt(V)/dx) / sqrt(V) dx`` from ``well`` to ``end``.

    The ``1/x`` singularities of the two terms cancel. The local model
    ``sqrt(V) ~ g x`` is subtracted analytically,

        ``int_0^X (g/sqrtV - 1/x) dx + log(g X / sqrt(V(end)))``,

    and the bounded remainder is integrated by Gauss panels on ``[x_c, X]``.
    On ``[0, x_c]``, where ``V`` loses digits to cancellation, the remainder
    is replaced by a polynomial fitted on ``[x_c, 5 x_c]``.
    """
    g = effpot.g
    direction = np.sign(end - well)
    X = abs(end - well)

    def remainder(x):
        v = effpot.sqrt(well + direction * x)
        return g / v - 1.0 / x

    def total(xc):
        body = _gauss(remainder, np.linspace(xc, X, 33))
        xs = xc * (3.0 - 2.0 * np.cos(np.linspace(0.0, np.pi, 12)))
        poly = np.polynomial.Polynomial.fit(xs, remainder(xs), 6)
        head = poly.integ()(xc) - poly.integ()(0.0)
        return body + head

    xc = 0.02 * X
    r, r_half = total(xc), total(0.5 * xc)
    if abs(r - r_half) > rtol * max(1.0, abs(r)):
        raise QuadratureNotConverged(
            f"prefactor integral: window change moved the value by {abs(r - r_half):.2e}")
    return r_half + np.log(g * X / effpot.sqrt(end))


@dataclass
class AgmonData:
    """Agmon profiles and path data between the two wells."""

    s: np.ndarray = field(repr=False)
    phi_r: np.ndarray = field(repr=False)
    phi_ell: np.ndarray = field(repr=False)
    S_u: float = 0.0
    S_d: float = 0.0
    A_u: float = 0.0
    A_d: float = 0.0
    g: float = 0.0

    @property
    def S(self):
        return min(self.S_u, self.S_d)

    @property
    def dominant(self):
        return "u" if self.S_u <= self.S_d else "d"


def agmon_profile(effpot, well, s):
    """``Phi(sigma) = int_[well, sigma] sqrt(V)`` on the periodic arc (shortest direction)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty_like(s)
    for i, x in enumerate(s):
        lo, hi = sorted((well, x))
        out[i] = 0.0 if hi == lo else _gauss(effpot.sqrt, np.linspace(lo, hi, 9))
    return out


def agmon(effpot, profile_nodes=257) -> AgmonData:
    """Agmon actions ``S_u``, ``S_d`` and prefactors ``A_u``, ``A_d``."""
    c = effpot.curve
    L, s_r, s_ell = c.half_length, c.s_r, c.s_ell
    S_u = action(effpot, s_ell, s_r)
    S_d = action(effpot, s_r, s_ell + 2.0 * L)
    A_u = float(np.exp(_prefactor_log(effpot, s_r, 0.0)))
    A_d = float(np.exp(_prefactor_log(effpot, s_r, L)))
    s = np.linspace(-L, L, profile_nodes)
    return AgmonData(s, agmon_profile(effpot, s_r, s), agmon_profile(effpot, s_ell, s),
                     S_u, S_d, A_u, A_d, effpot.g)


@dataclass
class TunnelingPrediction:
    """Predicted splitting ``2 |w|`` and its two path components."""

    h: float
    w_tilde: complex
    gap_predicted: float
    phase: dict
    components: dict
    S_u: float
    S_d: float
    A_u: float
    A_d: float
    g: float

    def row(self):
        return {"h": self.h, "gap_predicted": self.gap_predicted, "S_u": self.S_u,
                "S_d": self.S_d, "A_u": self.A_u, "A_d": self.A_d, "g": self.g,
                "gamma0": self.phase["gamma0"], "phase": self.phase["L_f"]}


def _predict(effpot, ag, gamma0, alpha, h):
    c = effpot.curve
    L = c.half_length
    f = gamma0 / h + effpot.zeta / np.sqrt(h) - alpha
    amp = effpot.mu_pp * h ** (13.0 / 8.0) * np.pi ** -0.5 * np.sqrt(effpot.g)
    u = ag.A_u * np.sqrt(float(effpot(0.0))) * np.exp(-ag.S_u / h**0.25)
    d = ag.A_d * np.sqrt(float(effpot(L))) * np.exp(-ag.S_d / h**0.25)
    w = amp * (u * np.exp(1j * L * f) + d * np.exp(-1j * L * f))
    return TunnelingPrediction(
        h, complex(w), float(2.0 * abs(w)),
        {"gamma0": gamma0, "zeta": effpot.zeta, "alpha": alpha, "f": f, "L_f": L * f},
        {"u": amp * u, "d": amp * d}, ag.S_u, ag.S_d, ag.A_u, ag.A_d, effpot.g)


def splitting_predict(constants, curve, alpha_a=0.0, h=0.01, effpot=None, ag=None):
    """Magnetic-step splitting prediction ``2 |w_a(h)|`` in the ``lambda`` normalization."""
    from .geometry import circulation

    effpot = effpot or effective_potential(constants, curve)
    ag = ag or agmon(effpot)
    return _predict(effpot, ag, circulation(curve), alpha_a, h)


def splitting_predict_neumann(curve, h, constants=None, alpha=0.0, effpot=None, ag=None):
    """Neumann analogue with the de Gennes constants."""
    from .geometry import circulation
    from .model1d import de_gennes_constants

    constants = constants or de_gennes_constants()
    effpot = effpot or effective_potential(constants, curve)
    ag = ag or agmon(effpot)
    return _predict(effpot, ag, circulation(curve), alpha, h)


def effective_gap_prediction(pred: TunnelingPrediction):
    """Prediction rescaled to the effective 1D operator (divided by ``h^{3/2}``).

    Without flux the two path terms add in phase.
    """
    h = pred.h
    return 2.0 * (abs(pred.components["u"]) + abs(pred.components["d"])) / h**1.5


@dataclass
class ArcSpec:
    """Open arc ``[s_ell, s_r]`` with a curvature profile even about 0."""

    curvature: object
    s_r: float
    k_max: float
    k2: float
    extent: float


def cosine_bump_arc(k0=1.0, amp=0.5, s_r=1.0):
    """Even curvature ``k0 + amp (cos(pi s / s_r) + 1)^2 / 4 ...`` with maxima at ``+-s_r``.

    Uses ``k(s) = k0 - amp cos(pi s / s_r)``: maxima ``k0 + amp`` at ``+-s_r``.
    """
    w = np.pi / s_r
    return ArcSpec(lambda s: k0 - amp * np.cos(w * np.asarray(s)), s_r, k0 + amp,
                   -amp * w**2, s_r)


def splitting_predict_transversal(arc: ArcSpec, constants, h, sym_tol=1e-10):
    """Splitting ``2 |w_a(h)|`` for an edge meeting the boundary transversally.

    The prefactor integral runs from ``s_ell`` to the midpoint 0 and is
    doubled by the evenness of ``k``.

    Raises
    ------
    SymmetryViolation
        If ``k`` is not even on ``[s_ell, s_r]``.
    """
    x = np.linspace(0.0, arc.s_r, 101)
    if np.max(np.abs(arc.curvature(x) - arc.curvature(-x))) > sym_tol:
        raise SymmetryViolation("curvature is not even about the arc midpoint")
    if not arc.k2 < 0:
        raise SymmetryViolation("curvature maxima are degenerate")
    coef = 2.0 * constants.m3 / constants.mu_pp

    class _Pot:
        g = float(np.sqrt(coef * arc.k2 / 2.0))

        def __call__(self, s):
            return np.maximum(coef * (arc.curvature(s) - arc.k_max), 0.0)

        def sqrt(self, s):
            return np.sqrt(self(s))

    pot = _Pot()
    S_a = _converged(pot.sqrt, -arc.s_r, arc.s_r, what="Agmon action")
    A_a = 2.0 * float(np.exp(_prefactor_log(pot, -arc.s_r, 0.0)))
    w = (2.0 * constants.mu_pp * h ** (13.0 / 8.0) * np.pi ** -0.5 * np.sqrt(pot.g)
         * A_a * np.sqrt(pot(0.0)) * np.exp(-S_a / h**0.25))
    return {"gap_predicted": float(2.0 * abs(w)), "S_a": S_a, "A_a": A_a, "g": pot.g}
