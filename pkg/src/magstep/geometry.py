"""Closed curves: arc-length parameterization, curvature, wells and circulation.

Conventions
-----------
Every curve is symmetric about the ``y`` axis and oriented counterclockwise,
so convex curves have ``k > 0``. Arc length ``s`` lives on ``[-L, L)`` with
``s = 0`` at one of the two axis points (the bottom one by default, see
:class:`ArcConvention`) and ``s = L`` at the other. The well with ``s > 0``
is ``s_r`` and its mirror image is ``s_ell = -s_r``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import interpolate, optimize

from .errors import (
    DegenerateCurvature,
    SelfIntersection,
    ValidationError,
    WellValidationFailed,
)

DEFAULT_NODES = 4096
NEAR_DEGENERATE_K2 = 0.1
_FOURIER_SAMPLES = 8192


class NearDegenerateWell(UserWarning):
    """Curvature maximum is non-degenerate but flat (``|k''|`` small)."""


@dataclass(frozen=True)
class ArcConvention:
    """Where ``s = 0`` sits and which way ``s`` increases.

    ``origin`` is ``"bottom"`` or ``"top"``: the axis point used as ``s = 0``.
    ``orientation`` is +1 for counterclockwise. ``upper_point_s`` is the arc
    coordinate of the upper axis point (``L`` for a bottom origin, 0 otherwise).
    """

    origin: str = "bottom"
    orientation: int = 1

    def __post_init__(self):
        if self.origin not in ("bottom", "top"):
            raise ValidationError(f"unknown arc origin {self.origin!r}")
        if self.orientation != 1:
            raise ValidationError("only counterclockwise orientation is supported")

    @property
    def upper_point_s(self) -> str:
        return "L" if self.origin == "bottom" else "0"


# --- parameterizations -----------------------------------------------------

class _Ellipse:
    def __init__(self, a, b):
        self.a, self.b = a, b

    def derivs(self, t):
        a, b = self.a, self.b
        s, c = np.sin(t), np.cos(t)
        return (np.stack([a * s, -b * c], -1), np.stack([a * c, b * s], -1),
                np.stack([-a * s, b * c], -1))

    def curvature(self, t):
        a, b = self.a, self.b
        return a * b / (a**2 * np.cos(t) ** 2 + b**2 * np.sin(t) ** 2) ** 1.5


class _Polar:
    """``r(theta) (sin theta, -cos theta)``; ``theta = 0`` is the bottom axis point."""

    def __init__(self, radius, coeffs):
        self.radius = radius
        self.m = np.array(sorted(coeffs), dtype=float)
        self.c = np.array([coeffs[k] for k in sorted(coeffs)], dtype=float)

    def r(self, t, nu=0):
        t = np.asarray(t, dtype=float)[..., None]
        m, c = self.m, self.c
        if nu == 0:
            terms = c * np.cos(m * t)
            out = 1.0 + terms.sum(-1)
        elif nu == 1:
            out = (-c * m * np.sin(m * t)).sum(-1)
        else:
            out = (-c * m**2 * np.cos(m * t)).sum(-1)
        return self.radius * out

    def derivs(self, t):
        r0, r1, r2 = self.r(t), self.r(t, 1), self.r(t, 2)
        s, c = np.sin(t), np.cos(t)
        p = np.stack([r0 * s, -r0 * c], -1)
        d1 = np.stack([r1 * s + r0 * c, -r1 * c + r0 * s], -1)
        d2 = np.stack([r2 * s + 2 * r1 * c - r0 * s, -r2 * c + 2 * r1 * s + r0 * c], -1)
        return p, d1, d2

    def curvature(self, t):
        r0, r1, r2 = self.r(t), self.r(t, 1), self.r(t, 2)
        return (r0**2 + 2 * r1**2 - r0 * r2) / (r0**2 + r1**2) ** 1.5


class _Spline:
    """Periodic quintic spline through a closed polyline."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        chord = np.r_[0.0, np.cumsum(np.hypot(*np.diff(np.vstack([pts, pts[:1]]), axis=0).T))]
        t = 2.0 * np.pi * chord / chord[-1]
        closed = np.vstack([pts, pts[:1]])
        self.spl = interpolate.make_interp_spline(t, closed, k=5, bc_type="periodic")

    def derivs(self, t):
        t = np.mod(t, 2.0 * np.pi)
        return self.spl(t), self.spl(t, 1), self.spl(t, 2)

    def curvature(self, t):
        _, d1, d2 = self.derivs(t)
        return _signed_curvature(d1, d2)


class _Shifted:
    """Parameterization re-based at ``t0`` and optionally rigidly moved."""

    def __init__(self, base, t0=0.0, rot=0.0, shift=(0.0, 0.0), scale=1.0):
        self.base, self.t0, self.scale = base, t0, scale
        c, s = np.cos(rot), np.sin(rot)
        self.rot = np.array([[c, -s], [s, c]])
        self.shift = np.asarray(shift, dtype=float)

    def derivs(self, t):
        p, d1, d2 = self.base.derivs(np.asarray(t) + self.t0)
        m = self.scale * self.rot.T
        return p @ m + self.shift, d1 @ m, d2 @ m

    def curvature(self, t):
        return self.base.curvature(np.asarray(t) + self.t0) / self.scale


def _signed_curvature(d1, d2):
    cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    return cross / np.hypot(d1[..., 0], d1[..., 1]) ** 3


class _ArcMap:
    """Spectrally accurate map between the parameter ``t`` and arc length."""

    def __init__(self, param, samples=_FOURIER_SAMPLES):
        t = 2.0 * np.pi * np.arange(samples) / samples
        _, d1, _ = param.derivs(t)
        speed = np.hypot(d1[:, 0], d1[:, 1])
        c = np.fft.rfft(speed) / samples
        keep = np.abs(c) > 1e-17 * abs(c[0])
        keep[0] = True
        self.n = np.nonzero(keep)[0][1:]
        self.c = c[self.n]
        self.c0 = float(c[0].real)
        self.param = param
        self.total = 2.0 * np.pi * self.c0
        self.resolved = abs(c[-1]) < 1e-12 * self.c0

    def s_of_t(self, t):
        t = np.asarray(t, dtype=float)
        ph = np.exp(1j * np.multiply.outer(t, self.n))
        osc = 2.0 * np.real((ph - 1.0) @ (self.c / (1j * self.n)))
        return self.c0 * t + osc

    def t_of_s(self, s):
        s = np.asarray(s, dtype=float)
        t = s / self.c0
        for _ in range(30):
            _, d1, _ = self.param.derivs(t)
            step = (self.s_of_t(t) - s) / np.hypot(d1[..., 0], d1[..., 1])
            t = t - step
            if np.max(np.abs(step)) < 1e-15:
                break
        return t


# --- curve model -----------------------------------------------------------

@dataclass
class CurveModel:
    """Closed symmetric curve sampled on a uniform arc-length grid.

    Attributes
    ----------
    half_length : float
        ``L``; the curve length is ``2L``.
    s, xy, k : ndarray
        Arc grid on ``[-L, L)``, points and curvature.
    wells : dict
        ``s_r``, ``s_ell``, ``k_max``, ``k2`` (empty until validated).
    """

    kind: str
    params: dict
    half_length: float
    area: float
    s: np.ndarray = field(repr=False)
    xy: np.ndarray = field(repr=False)
    k: np.ndarray = field(repr=False)
    convention: ArcConvention = field(default_factory=ArcConvention)
    wells: dict = field(default_factory=dict)
    _param: object = field(default=None, repr=False)
    _arc: object = field(default=None, repr=False)

    @property
    def k_max(self):
        return self.wells["k_max"]

    @property
    def k2(self):
        return self.wells["k2"]

    @property
    def s_r(self):
        return self.wells["s_r"]

    @property
    def s_ell(self):
        return self.wells["s_ell"]

    def _t(self, s):
        # shift s into [-L, L) and map to the parameter
        L = self.half_length
        s = np.mod(np.asarray(s, dtype=float) + L, 2.0 * L) - L
        return self._arc.t_of_s(s)

    def curvature_at(self, s):
        """Curvature at arbitrary arc coordinates (periodic)."""
        return self._param.curvature(self._t(s))

    def curvature_second_derivative(self, s, step=1e-3):
        """``k''(s)`` by a five-point stencil in arc length."""
        d = step * np.array([-2, -1, 0, 1, 2])
        kk = self.curvature_at(np.asarray(s, dtype=float)[..., None] + d)
        return (-kk[..., 0] + 16 * kk[..., 1] - 30 * kk[..., 2] + 16 * kk[..., 3]
                - kk[..., 4]) / (12.0 * step**2)

    def curvature_derivative(self, s, order=1):
        """``d^order k / ds^order`` by trigonometric interpolation of the grid samples."""
        n = len(self.k)
        L = self.half_length
        c = np.fft.rfft(self.k) / n
        w = np.pi * np.arange(len(c)) / L
        c = c * (1j * w) ** order
        if n % 2 == 0:
            c[-1] = c[-1].real * (order % 2 == 0)
        c[1:] *= 2.0
        if n % 2 == 0:
            c[-1] *= 0.5
        x = np.asarray(s, dtype=float) + L
        out = np.real(np.exp(1j * np.multiply.outer(x, w)) @ c)
        return out

    def points_at(self, s):
        return self._param.derivs(self._t(s))[0]

    def speed_check(self):
        """Max deviation of ``|dM/ds|`` from 1 on the grid (finite difference free)."""
        t = self._t(self.s)
        _, d1, _ = self._param.derivs(t)
        ds_dt = np.hypot(d1[:, 0], d1[:, 1])
        # exact derivative of the arc map at the same nodes
        ph = np.exp(1j * np.multiply.outer(t, self._arc.n))
        dsdt_map = self._arc.c0 + 2.0 * np.real(ph @ self._arc.c)
        return float(np.max(np.abs(ds_dt / dsdt_map - 1.0)))

    def closure_error(self):
        p0 = self._param.derivs(np.array([0.0]))[0][0]
        p1 = self._param.derivs(np.array([2.0 * np.pi]))[0][0]
        return float(np.hypot(*(p1 - p0)))

    def scaled(self, rho):
        """Dilation by ``rho`` (``k -> k/rho``, ``L -> rho L``)."""
        return _finish(self.kind, {**self.params, "dilation": rho},
                       _Shifted(self._param, scale=rho), self.convention, len(self.s),
                       validate=bool(self.wells))

    def rigid_motion(self, angle, shift):
        """Rotated and translated copy; intrinsic data and wells are unchanged."""
        param = _Shifted(self._param, rot=angle, shift=shift)
        xy = param.derivs(self._t(self.s))[0]
        return replace(self, xy=xy, _param=param, area=_area(param))


def _area(param, samples=_FOURIER_SAMPLES):
    t = 2.0 * np.pi * np.arange(samples) / samples
    p, d1, _ = param.derivs(t)
    # Green's theorem on the periodic trapezoid rule
    return float(0.5 * np.mean(p[:, 0] * d1[:, 1] - p[:, 1] * d1[:, 0]) * 2.0 * np.pi)


def _check_embedded(xy):
    """Reject self-intersecting polylines (segment crossing test on a subsample)."""
    step = max(1, len(xy) // 512)
    p = xy[::step]
    q = np.roll(p, -1, axis=0)
    n = len(p)
    for i in range(n):
        a, b = p[i], q[i]
        j = np.arange(i + 2, n if i > 0 else n - 1)
        if len(j) == 0:
            continue
        c, d = p[j], q[j]
        d1 = _orient(a, b, c)
        d2 = _orient(a, b, d)
        d3 = _orient_many(c, d, a)
        d4 = _orient_many(c, d, b)
        if np.any((d1 * d2 < 0) & (d3 * d4 < 0)):
            raise SelfIntersection("curve is not embedded (self-intersection detected)")


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[:, 1] - a[1]) - (b[1] - a[1]) * (c[:, 0] - a[0])


def _orient_many(c, d, p):
    return (d[:, 0] - c[:, 0]) * (p[1] - c[:, 1]) - (d[:, 1] - c[:, 1]) * (p[0] - c[:, 0])


def _finish(kind, params, param, convention, n_nodes, validate=True):
    arc = _ArcMap(param)
    L = 0.5 * arc.total
    s = -L + 2.0 * L * np.arange(n_nodes) / n_nodes
    t = arc.t_of_s(s)
    p, d1, d2 = param.derivs(t)
    k = param.curvature(t)
    curve = CurveModel(kind, dict(params), L, _area(param), s, p, k, convention,
                       {}, param, arc)
    if curve.area <= 0:
        raise ValidationError("curve must be counterclockwise")
    if validate:
        curve.wells = validate_double_well(curve)
    return curve


def _origin_shift(convention):
    return 0.0 if convention.origin == "bottom" else np.pi


def build_ellipse(semi_major, semi_minor, convention=None, n_nodes=DEFAULT_NODES,
                  validate=True):
    """Ellipse with the major axis along ``x``; wells at the major-axis ends.

    Raises
    ------
    DegenerateCurvature
        For a circle.
    """
    convention = convention or ArcConvention()
    if not semi_major > 0 or not semi_minor > 0:
        raise ValidationError("semi-axes must be positive")
    if semi_major == semi_minor:
        raise DegenerateCurvature("circle: curvature is constant")
    if semi_major < semi_minor:
        raise ValidationError("semi_major must exceed semi_minor")
    param = _Shifted(_Ellipse(semi_major, semi_minor), t0=_origin_shift(convention))
    return _finish("ellipse", {"semi_major": semi_major, "semi_minor": semi_minor},
                   param, convention, n_nodes, validate)


def build_fourier_curve(radius, cos_coeffs, convention=None, n_nodes=DEFAULT_NODES,
                        validate=True):
    """Polar curve ``r = radius (1 + sum_m c_m cos(m theta))``.

    ``theta`` is measured from the bottom axis point, so the curve is mirror
    symmetric about the ``y`` axis. Negative ``c_2`` elongates the curve
    across the axis and puts the two wells off the axis; odd terms make the
    upper and lower arcs unequal.
    """
    convention = convention or ArcConvention()
    coeffs = {int(m): float(c) for m, c in dict(cos_coeffs).items() if c != 0.0}
    if not coeffs:
        raise DegenerateCurvature("circle: curvature is constant")
    if any(m < 1 for m in coeffs):
        raise ValidationError("Fourier modes must be positive integers")
    polar = _Polar(radius, coeffs)
    theta = np.linspace(0.0, 2.0 * np.pi, 4096, endpoint=False)
    if np.min(polar.r(theta)) <= 0:
        raise SelfIntersection("radial function is not positive")
    param = _Shifted(polar, t0=_origin_shift(convention))
    curve = _finish("fourier", {"radius": radius, "cos_coeffs": coeffs}, param,
                    convention, n_nodes, validate=False)
    _check_embedded(curve.xy)
    if validate:
        curve.wells = validate_double_well(curve)
    return curve


def load_tabulated(path, convention=None, n_nodes=DEFAULT_NODES, validate=True, tol=1e-3):
    """Curve from a two-column CSV of boundary points (closed polyline)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                continue  # header line
    return build_tabulated(np.array(rows), convention, n_nodes, validate, tol)


def build_tabulated(points, convention=None, n_nodes=DEFAULT_NODES, validate=True,
                    tol=1e-3):
    """Curve through a closed polyline, resampled by a periodic quintic spline."""
    convention = convention or ArcConvention()
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 16:
        raise ValidationError("need at least 16 (x, y) points")
    if np.allclose(pts[0], pts[-1]):
        pts = pts[:-1]
    signed = 0.5 * np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
    if signed < 0:
        pts = pts[::-1]
    spline = _Spline(pts)
    # axis points: the zeros of x(t)
    t = np.linspace(0.0, 2.0 * np.pi, 4097)
    x = spline.derivs(t)[0][:, 0]
    roots = [optimize.brentq(lambda u: spline.derivs(np.array([u]))[0][0, 0], t[i], t[i + 1])
             for i in np.nonzero(np.sign(x[:-1]) * np.sign(x[1:]) < 0)[0]]
    if len(roots) != 2:
        raise ValidationError("tabulated curve must cross the y axis exactly twice")
    ys = [spline.derivs(np.array([r]))[0][0, 1] for r in roots]
    t0 = roots[int(np.argmin(ys))] if convention.origin == "bottom" else roots[int(np.argmax(ys))]
    param = _Shifted(spline, t0=t0)
    curve = _finish("tabulated", {"n_input": len(pts)}, param, convention, n_nodes,
                    validate=False)
    _check_embedded(curve.xy)
    if validate:
        # interpolated data: symmetry holds only to the spline accuracy
        curve.wells = validate_double_well(curve, sym_tol=tol, k2_tol=tol)
    return curve


def validate_double_well(curve, sym_tol=1e-6, rel_tol=1e-6,
                         degenerate_k2=NEAR_DEGENERATE_K2, k2_tol=1e-5):
    """Locate the two symmetric curvature maxima and check non-degeneracy.

    Returns
    -------
    dict
        ``s_r``, ``s_ell``, ``k_max``, ``k2``.

    Raises
    ------
    WellValidationFailed
        With the number of maxima found and a degeneracy flag.
    """
    k = curve.k
    kmax = float(np.max(k))
    spread = kmax - float(np.min(k))
    if spread <= rel_tol * max(abs(kmax), 1.0):
        raise WellValidationFailed("curvature is constant", n_maxima=0, degenerate=True)
    is_max = (k >= np.roll(k, 1)) & (k > np.roll(k, -1))
    cand = np.nonzero(is_max & (k > kmax - 0.05 * spread))[0]
    L = curve.half_length
    refined = []
    for i in cand:
        s0 = curve.s[i]
        h = 2.0 * L / len(k)
        res = optimize.minimize_scalar(lambda u: -float(curve.curvature_at(u)),
                                       bounds=(s0 - 2 * h, s0 + 2 * h), method="bounded",
                                       options={"xatol": 1e-12})
        refined.append((float(res.x), float(-res.fun)))
    top = max(v for _, v in refined)
    glob = [(s, v) for s, v in refined if v > top - rel_tol * spread]
    if len(glob) != 2:
        raise WellValidationFailed(f"expected two curvature maxima, found {len(glob)}",
                                   n_maxima=len(glob), degenerate=False)
    (s1, v1), (s2, v2) = sorted(glob)
    s_r, s_ell = s2, s1
    if not (s_ell < 0 < s_r) or abs(s_r + s_ell) > sym_tol * L:
        raise WellValidationFailed("maxima are not a symmetric pair about s = 0",
                                   n_maxima=2, degenerate=False)
    k2r = float(curve.curvature_second_derivative(s_r))
    k2l = float(curve.curvature_second_derivative(s_ell))
    if not (k2r < 0 and k2l < 0):
        raise WellValidationFailed("curvature maximum is degenerate", n_maxima=2,
                                   degenerate=True)
    if abs(k2r - k2l) > k2_tol * max(abs(k2r), 1.0):
        raise WellValidationFailed("k'' differs between the wells", n_maxima=2,
                                   degenerate=False)
    grid_sym = np.max(np.abs(k[1:] - k[1:][::-1]))
    if grid_sym > sym_tol * max(abs(kmax), 1.0):
        raise WellValidationFailed(f"curvature is not even in s (max defect {grid_sym:.2e})",
                                   n_maxima=2, degenerate=False)
    k2 = 0.5 * (k2r + k2l)
    if abs(k2) < degenerate_k2:
        warnings.warn(f"near-degenerate wells: |k''| = {abs(k2):.3g}", NearDegenerateWell,
                      stacklevel=2)
    return {"s_r": 0.5 * (s_r - s_ell), "s_ell": -0.5 * (s_r - s_ell),
            "k_max": 0.5 * (v1 + v2), "k2": k2}


def circulation(curve) -> float:
    """``gamma_0 = area / length``."""
    return curve.area / (2.0 * curve.half_length)


def perimeter_oracle(semi_major, semi_minor):
    """Ellipse perimeter by adaptive quadrature of the speed."""
    from scipy import integrate

    val, _ = integrate.quad(lambda t: np.hypot(semi_major * np.sin(t), semi_minor * np.cos(t)),
                            0.0, 2.0 * np.pi, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val
