"""Periodic effective operator ``(mu''/2)(-h^{1/2} d^2/ds^2 + V)`` and its low spectrum."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse

from .errors import ConvergenceFailure, FitIllConditioned, GapBelowNoiseFloor, ValidationError

DENSE_LIMIT = 4096
# power of h in front of exp(-S/h^{1/4}) for the effective-operator gap
EFFECTIVE_GAP_POWER = 1.0 / 8.0
# range of S / h^{1/4} for the default sweep
AGMON_WINDOW = (16.0, 26.0)


@dataclass
class PeriodicOperator1D:
    """Symmetric tridiagonal-plus-corner matrix on ``n`` nodes of ``[-L, L)``."""

    h: float
    s: np.ndarray = field(repr=False)
    potential: np.ndarray = field(repr=False)
    diag: np.ndarray = field(repr=False)
    off: float = 0.0
    scale: float = 1.0

    @property
    def n(self):
        return len(self.s)

    def matrix(self, fmt="csr"):
        n = self.n
        m = sparse.diags([np.full(n - 1, self.off), self.diag, np.full(n - 1, self.off)],
                         [-1, 0, 1], format="lil")
        m[0, n - 1] = self.off
        m[n - 1, 0] = self.off
        return m.asformat(fmt)

    def dense(self):
        return self.matrix().toarray()


def assemble(effpot, h, n=2048, potential=None) -> PeriodicOperator1D:
    """Three-point periodic discretization.

    Parameters
    ----------
    effpot : EffectivePotential
        Supplies ``mu''`` and ``V`` (evaluated at the nodes).
    h : float
        Semiclassical parameter.
    n : int
        Number of nodes (at least 256).
    potential : callable, optional
        Replaces ``V`` (used for calibration with simple potentials).
    """
    if n < 256:
        raise ValidationError("n must be at least 256")
    if not h > 0:
        raise ValidationError("h must be positive")
    L = effpot.curve.half_length
    s = -L + 2.0 * L * np.arange(n) / n
    v = effpot(s) if potential is None else np.broadcast_to(potential(s), s.shape).astype(float)
    ds = 2.0 * L / n
    scale = 0.5 * effpot.mu_pp
    kin = np.sqrt(h) / ds**2
    return PeriodicOperator1D(h, s, v, scale * (2.0 * kin + v), -scale * kin, scale)


def _even_odd_pair(op):
    """Lowest even and odd eigenvalues for a potential even about ``s = 0``.

    Node ``j`` mirrors to ``n - j``; the even sector lives on ``0..n/2`` with
    the two fixed nodes weighted by ``sqrt(2)`` so that it stays symmetric,
    the odd sector on ``1..n/2-1`` with zero values at the fixed nodes.
    """
    m = op.n // 2
    d = op.diag[: m + 1]
    e = np.full(m, op.off)
    e[0] *= np.sqrt(2.0)
    e[-1] *= np.sqrt(2.0)
    even = linalg.eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    odd = linalg.eigh_tridiagonal(d[1:m], np.full(m - 2, op.off), select="i",
                                  select_range=(0, 0))
    return even, odd


def _is_even(op, tol=1e-12):
    n = op.n
    if n % 2:
        return False
    v = op.potential
    return bool(np.max(np.abs(v[1:] - v[1:][::-1])) <= tol * max(1.0, np.max(np.abs(v))))


def lowest_pair(op: PeriodicOperator1D, positive_check=True):
    """Two smallest eigenvalues ``(nu1, nu2, gap)``.

    Potentials even about ``s = 0`` split exactly into even and odd
    tridiagonal blocks. Otherwise the solve is dense for ``n <= 4096`` and
    shift-invert Lanczos above.
    """
    if _is_even(op):
        (ev, evec), (ov, _) = _even_odd_pair(op)
        v0 = evec[:, 0]
        vals = np.sort([ev[0], ov[0]])
        if ov[0] < ev[0]:
            if ev[0] - ov[0] <= 1e3 * accuracy_floor(op):
                raise GapBelowNoiseFloor("even/odd splitting lost to rounding")
            raise ConvergenceFailure("odd state below the even ground state")
    else:
        if op.n <= DENSE_LIMIT:
            vals, vecs = linalg.eigh(op.dense(), subset_by_index=[0, 1])
        else:
            from .operator2d import lanczos_smallest

            lo = float(np.min(op.diag) + 2.0 * op.off)  # Gershgorin lower bound
            vals, vecs, _ = lanczos_smallest(op.matrix("csc"), 2,
                                             shift=lo - 1e-3 * abs(lo) - 1e-8)
        v0 = vecs[:, 0]
    v0 = v0 * np.sign(v0[np.argmax(np.abs(v0))])
    if positive_check and np.min(v0) < -1e-10 * np.max(v0):
        raise ConvergenceFailure("ground state of the effective operator is not positive")
    gap = float(vals[1] - vals[0])
    if not gap > 0:
        raise ConvergenceFailure("non-positive gap on a double-well instance")
    return float(vals[0]), float(vals[1]), gap


def harmonic_levels_check(effpot, h, count=2, n=2048, shelf=None):
    """Compare the low levels of one well with the harmonic ladder.

    The far well is masked by a shelf: on the half circle around ``s_ell``
    the potential is raised to ``shelf`` (default ``max V``).

    Returns
    -------
    dict
        Levels, predicted ladder ``(2n-1) (mu''/2) g h^{1/4}``, relative errors
        of the spacings and the ratio ``(nu3 - nu1) / (nu2 - nu1)``.
    """
    c = effpot.curve
    L = c.half_length
    vmax = float(np.max(effpot.samples)) if shelf is None else shelf

    def one_well(s):
        v = effpot(s)
        return np.where(np.abs(s - c.s_r) <= 0.5 * L, v, np.maximum(v, vmax))

    op = assemble(effpot, h, n, potential=one_well)
    vals = linalg.eigh_tridiagonal(op.diag, np.full(n - 1, op.off), select="i",
                                   select_range=(0, count), eigvals_only=True)
    # the corner entries are negligible: the shelf keeps the states away from s = -L
    quantum = 0.5 * effpot.mu_pp * effpot.g * h**0.25
    ladder = quantum * (2 * np.arange(1, count + 2) - 1)
    spacing = np.diff(vals)
    return {"levels": vals, "ladder": ladder, "quantum": quantum,
            "spacing": spacing, "spacing_rel_err": spacing / (2.0 * quantum) - 1.0,
            "ratio": (vals[2] - vals[0]) / (vals[1] - vals[0]) if count >= 2 else np.nan}


def accuracy_floor(op):
    """Absolute eigenvalue accuracy ``eps * ||T||_inf`` of a symmetric solve."""
    return float(np.finfo(float).eps * (np.max(np.abs(op.diag)) + 2.0 * abs(op.off)))


def gap_sweep(effpot, h_list, n=1024):
    """Rows ``(h, nu1, nu2, gap, floor)``."""
    rows = []
    for h in h_list:
        op = assemble(effpot, h, n)
        nu1, nu2, gap = lowest_pair(op)
        rows.append((float(h), nu1, nu2, gap, accuracy_floor(op)))
    return rows


def default_h_list(S, count=12, window=AGMON_WINDOW):
    """Geometric ``h`` grid on which ``S / h^{1/4}`` spans ``window``.

    Below about 15 the ground level of a well is comparable to the barrier
    on the desk-scale curves and no tunnelling regime exists; above 30 the
    gap reaches the double-precision floor.
    """
    lo, hi = window
    if not 0 < lo < hi <= 30.0:
        raise ValidationError("window must satisfy 0 < lo < hi <= 30")
    return np.geomspace((S / hi) ** 4, (S / lo) ** 4, count)


def resolvable_h_list(effpot, S, count=12, n=1024, top=AGMON_WINDOW[1],
                      span=AGMON_WINDOW[1] - AGMON_WINDOW[0], resolution=1e3):
    """``default_h_list`` with the upper end of the window lowered in unit
    steps until the smallest-``h`` gap is resolvable.

    Small prefactors (shallow wells) push the gap under the floor earlier
    than ``S / h^{1/4} = 26``.
    """
    hi = float(top)
    while hi - span >= 8.0:
        h = (S / hi) ** 4
        op = assemble(effpot, h, n)
        if lowest_pair(op)[2] >= resolution * accuracy_floor(op):
            return default_h_list(S, count, (hi - span, hi))
        hi -= 1.0
    raise GapBelowNoiseFloor("no resolvable window with S / h^{1/4} >= 8")


def gap_exponent_fit(effpot, h_list, n=1024, fixed_power=EFFECTIVE_GAP_POWER,
                     first_order=True, resolution=1e3):
    """Fit ``ln gap = c + p ln h - S h^{-1/4} [+ d h^{1/4}]``.

    Parameters
    ----------
    fixed_power : float or None
        Power ``p`` of the prefactor; ``None`` fits it.
    first_order : bool
        Include the ``h^{1/4}`` term, the first correction to the prefactor.
        The well anharmonicity makes it large on desk-scale curves.
    resolution : float
        Each gap must exceed this multiple of the eigensolver accuracy floor.

    Returns
    -------
    dict
        ``S_fit``, ``prefactor_power_fit``, ``log_prefactor``, ``correction``
        and the sweep ``rows``.
    """
    h_list = np.asarray(sorted(h_list), dtype=float)
    if h_list[-1] / h_list[0] < 4.0:
        raise ValidationError("h range must span at least a factor 4")
    rows = gap_sweep(effpot, h_list, n)
    gaps = np.array([r[3] for r in rows])
    floors = np.array([r[4] for r in rows])
    bad = gaps < resolution * floors
    if np.any(bad):
        i = int(np.argmax(bad))
        raise GapBelowNoiseFloor(
            f"gap {gaps[i]:.2e} at h={h_list[i]:.3e} is below {resolution:g} x {floors[i]:.1e}")
    x = h_list ** -0.25
    y = np.log(gaps)
    cols = {"c": np.ones_like(h_list), "S": -x}
    if fixed_power is None:
        cols["p"] = np.log(h_list)
    else:
        y = y - fixed_power * np.log(h_list)
    if first_order:
        cols["d"] = 1.0 / x
    X = np.column_stack(list(cols.values()))
    if np.linalg.cond(X) > 1e10:
        raise FitIllConditioned("gap fit design matrix is ill-conditioned")
    coef = dict(zip(cols, np.linalg.lstsq(X, y, rcond=None)[0]))
    return {"S_fit": float(coef["S"]),
            "prefactor_power_fit": float(coef.get("p", fixed_power)),
            "log_prefactor": float(coef["c"]),
            "correction": float(coef.get("d", 0.0)),
            "rows": rows}
