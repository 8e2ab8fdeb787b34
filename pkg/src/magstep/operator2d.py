"""Finite-difference edge operator on the strip and its single-well variants.

The operator acts on ``L^2(a d sigma d tau)`` with ``a = 1 - hbar c_mu(tau) tau k(sigma)``:

    ``N = -a^{-1} d_tau a d_tau + a^{-1} Q a^{-1} Q``,
    ``Q = -i hbar d_sigma + gamma0 / hbar - b tau + hbar c_mu (k/2) b tau^2``.

Discretization
--------------
In ``sigma`` the operator is discretized for ``w = exp(i Gamma sigma / hbar) u``
with ``Gamma = gamma0 / hbar + zeta``, where ``Q`` becomes
``-i hbar d_sigma + W`` with ``W = -(zeta + b tau) + hbar c_mu (k/2) b tau^2``:

    ``-hbar^2 D_- a^{-1} D_+ + W^2 a^{-1} - i hbar (c D_c + D_c c)``, ``c = W a^{-1}``,

and mapped back to ``u`` by link phases ``exp(i Gamma d_sigma / hbar)``.
Low-lying states are slowly varying in this gauge, the lattice band never
drops below the fiber band, and shifting ``gamma0`` by ``hbar^2 pi m / L``
is an exact discrete gauge transformation.

The generalized problem ``H u = nu M u`` with the diagonal mass ``M`` is
symmetrized as ``M^{-1/2} H M^{-1/2}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, sparse
from scipy.sparse import linalg as spla

from . import model1d
from .moments import inverse_b
from .errors import (
    ConvergenceFailure,
    ExtensionNotUnimodal,
    FitIllConditioned,
    GapBelowNoiseFloor,
    GridGuardFailure,
    ValidationError,
    WeightNotPositive,
)

ETA_DEFAULT = 1.0 / 8.0
WEIGHT_GUARD = 0.2


def smoothstep(t):
    """Quintic smoothstep on ``[0, 1]`` (C^2 at both ends)."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def cutoff(x):
    """``c = 1`` on ``[-1, 1]``, ``0`` outside ``(-2, 2)``, quintic in between."""
    return 1.0 - smoothstep(np.abs(x) - 1.0)


def cutoff_scale(hbar, eta=ETA_DEFAULT):
    """``mu = hbar^{1/2 + 2 eta}``."""
    if not 0.0 < eta < 0.25:
        raise ValidationError("eta must lie in (0, 1/4)")
    return hbar ** (0.5 + 2.0 * eta)


def tau_extent(hbar, eta=ETA_DEFAULT):
    """``T = max(12, 4/mu)``."""
    return max(12.0, 4.0 / cutoff_scale(hbar, eta))


@dataclass(frozen=True)
class StripGrid:
    """Tensor grid: uniform in ``sigma`` (periodic or Dirichlet), graded in ``tau``.

    ``tau`` includes both Dirichlet end nodes; unknowns live on the interior.
    """

    sigma: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)
    periodic: bool = True
    d_sigma: float = 0.0

    @property
    def n_sigma(self):
        return len(self.sigma)

    @property
    def n_tau(self):
        return len(self.tau)

    @property
    def tau_inner(self):
        return self.tau[1:-1]

    @property
    def tau_gaps(self):
        return np.diff(self.tau)

    @property
    def tau_widths(self):
        """Dual cell widths at the interior nodes."""
        g = self.tau_gaps
        return 0.5 * (g[1:] + g[:-1])

    @property
    def shape(self):
        return self.n_sigma, self.n_tau - 2

    @classmethod
    def periodic_strip(cls, L, n_sigma, tau):
        s = -L + 2.0 * L * np.arange(n_sigma) / n_sigma
        return cls(s, np.asarray(tau, dtype=float), True, 2.0 * L / n_sigma)

    @classmethod
    def line(cls, lo, hi, n_sigma, tau):
        """``n_sigma`` interior nodes on ``(lo, hi)``, zero at both ends."""
        d = (hi - lo) / (n_sigma + 1)
        s = lo + d * np.arange(1, n_sigma + 1)
        return cls(s, np.asarray(tau, dtype=float), False, d)


def graded_tau(n_tau, T, core=(-13.0, 9.0), tails=None):
    """``tau`` nodes on ``[-T, T]``: uniform on ``core`` (with 0 a node) and
    geometric beyond it.

    Parameters
    ----------
    n_tau : int
        Total node count including the two Dirichlet ends.
    T : float
        Half extent; the core is clipped to it.
    tails : int, optional
        Nodes per tail (default ``max(6, n_tau // 16)``).
    """
    lo, hi = max(core[0], -T), min(core[1], T)
    n_t = max(6, n_tau // 16) if tails is None else tails
    need_lo, need_hi = lo > -T, hi < T
    n_core = n_tau - n_t * (need_lo + need_hi)
    if n_core < 8:
        raise GridGuardFailure("too few tau nodes for the core")
    d = (hi - lo) / (n_core - 1)
    n_left = int(np.floor(-lo / d + 1e-9))
    n_right = n_core - 1 - n_left
    d = min(-lo / max(n_left, 1) if n_left else np.inf, hi / max(n_right, 1) if n_right else np.inf)
    nodes = d * np.arange(-n_left, n_right + 1, dtype=float)

    def tail(start, length):
        if length <= 0:
            return np.empty(0)
        if length <= n_t * d:
            return start + np.linspace(length / n_t, length, n_t)
        r = optimize.brentq(lambda q: d * np.sum(q ** np.arange(1, n_t + 1)) - length, 1.0 + 1e-12, 10.0)
        return start + np.cumsum(d * r ** np.arange(1, n_t + 1))

    right = tail(nodes[-1], T - nodes[-1]) if need_hi else np.empty(0)
    left = -tail(-nodes[0], T + nodes[0])[::-1] if need_lo else np.empty(0)
    out = np.concatenate([left, nodes, right])
    out[0], out[-1] = -T if need_lo else out[0], T if need_hi else out[-1]
    return out


def uniform_tau(grid: model1d.Grid1D):
    """Nodes of a fiber grid (for consistency checks against ``model1d``)."""
    return np.asarray(grid.nodes, dtype=float)


@dataclass
class WeightedOperator2D:
    """Assembled, symmetrized operator with its grid data."""

    hbar: float
    eta: float
    mu: float
    gamma0: float
    Gamma: float
    grid: StripGrid
    matrix: sparse.csc_matrix = field(repr=False)
    mass_sqrt: np.ndarray = field(repr=False)
    weight_min: float = 1.0
    kind: str = "full"
    curvature: np.ndarray = field(default=None, repr=False)
    constants: object = field(default=None, repr=False)
    k2: float = None

    @property
    def n(self):
        return self.matrix.shape[0]

    def symmetry_defect(self):
        d = self.matrix - self.matrix.getH()
        return float(abs(d).max()) if d.nnz else 0.0

    def to_nodal(self, vecs):
        """Undo the ``M^{1/2}`` similarity and reshape to ``(n_sigma, n_tau_inner, ...)``."""
        u = vecs / self.mass_sqrt[:, None] if vecs.ndim == 2 else vecs / self.mass_sqrt
        return u.reshape(self.grid.shape + u.shape[1:])

    def export_coo(self, path):
        """Write ``row col re im`` lines (0-based) of the symmetrized matrix."""
        m = self.matrix.tocoo()
        np.savetxt(path, np.column_stack([m.row, m.col, m.data.real, m.data.imag]),
                   fmt=["%d", "%d", "%.17g", "%.17g"], header=f"{m.shape[0]} {m.shape[1]}")


def _assemble(constants, grid: StripGrid, k_sigma, k_link, hbar, eta, gamma0, kind):
    a_ratio = constants.a
    zeta = constants.zeta_a
    mu = cutoff_scale(hbar, eta)
    T = max(abs(grid.tau[0]), abs(grid.tau[-1]))
    if 2.0 / mu > T + 1e-12:
        raise GridGuardFailure(f"cutoff support 2/mu = {2.0 / mu:.2f} exceeds tau extent {T:.2f}")
    tau = grid.tau
    if not np.any(tau == 0.0):
        raise GridGuardFailure("tau = 0 must be a grid node")
    ti = grid.tau_inner
    tm = 0.5 * (tau[1:] + tau[:-1])
    ns, nt = grid.n_sigma, len(ti)
    ds = grid.d_sigma

    def weight(k, t):
        return 1.0 - hbar * np.multiply.outer(k, cutoff(mu * t) * t)

    a_node = weight(k_sigma, ti)
    a_gap = weight(k_sigma, tm)
    a_link = weight(k_link, ti)
    wmin = float(min(a_node.min(), a_gap.min(), a_link.min()))
    if wmin <= 0.0:
        raise WeightNotPositive(f"weight 1 - hbar c tau k reaches {wmin:.3f}")
    if wmin < WEIGHT_GUARD:
        raise GridGuardFailure(f"weight minimum {wmin:.3f} below the guard {WEIGHT_GUARD}")

    idx = np.arange(ns * nt).reshape(ns, nt)
    # tau part: gaps i+1/2 for i = 0..nt (ends are Dirichlet)
    gaps = grid.tau_gaps
    rows, cols, vals, wts = [], [], [], []
    n_gap = nt + 1
    gid = np.arange(ns * n_gap).reshape(ns, n_gap)
    for sgn, off in ((-1.0, 0), (1.0, 1)):
        # node index i_node = gap + off - 1 in interior numbering
        i_node = np.arange(n_gap) + off - 1
        ok = (i_node >= 0) & (i_node < nt)
        g = gid[:, ok].ravel()
        c = idx[:, i_node[ok]].ravel()
        rows.append(g)
        cols.append(c)
        vals.append(np.broadcast_to(sgn / gaps[ok], (ns, ok.sum())).ravel())
    Dt = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(ns * n_gap, ns * nt))
    wt_tau = (a_gap * gaps * ds).ravel()

    # sigma part in the gauge w = exp(i Gamma sigma / hbar) u:
    # -hbar^2 D_- a^{-1} D_+ + W^2 a^{-1} - i hbar (c D_c + D_c c), c = W a^{-1}
    b = model1d.b_profile(a_ratio, ti)
    c_mu = cutoff(mu * ti)
    Gamma = gamma0 / hbar + zeta

    def W_at(k):
        return -(zeta + b * ti) + hbar * 0.5 * np.multiply.outer(k, c_mu * b * ti**2)

    w_node = W_at(k_sigma)
    cw = w_node / a_node
    cw_link = 0.5 * (cw + np.roll(cw, -1, axis=0))
    kin = hbar**2 / ds**2 / a_link
    ph = np.exp(1j * Gamma * ds / hbar)
    # coupling of node j to node j+1 (Hermitian partner added below)
    up = (-kin - 1j * hbar / ds * cw_link) * ph
    diag_s = w_node**2 / a_node + kin + np.roll(kin, 1, axis=0)
    if grid.periodic:
        j_lo = np.arange(ns)
    else:
        j_lo = np.arange(ns - 1)
        # Dirichlet ghosts; k vanishes on the padded ends, so the outer links
        # share the weight of their inner neighbours
        diag_s[0] = w_node[0] ** 2 / a_node[0] + 2.0 * kin[0]
        diag_s[-1] = w_node[-1] ** 2 / a_node[-1] + kin[-1] + kin[-2]
    j_hi = (j_lo + 1) % ns
    r = idx[j_lo].ravel()
    cc = idx[j_hi].ravel()
    v = up[j_lo].ravel()
    Hs = sparse.csr_matrix((v, (r, cc)), shape=(ns * nt, ns * nt))
    wq = np.broadcast_to(ds * grid.tau_widths, (ns, nt)).ravel()
    Hs = sparse.diags(wq) @ (Hs + Hs.getH() + sparse.diags(diag_s.ravel()))

    H = Dt.T @ sparse.diags(wt_tau) @ Dt + Hs
    mass = (a_node * grid.tau_widths * ds).ravel()
    ms = np.sqrt(mass)
    S = sparse.diags(1.0 / ms) @ H @ sparse.diags(1.0 / ms)
    S = (0.5 * (S + S.getH())).tocsc()
    S.sum_duplicates()
    return WeightedOperator2D(hbar, eta, mu, gamma0, Gamma, grid, S, ms, wmin, kind,
                              np.asarray(k_sigma), constants)


def default_strip(curve, hbar, n_sigma=512, n_tau=256, eta=ETA_DEFAULT, core=None,
                  constants=None):
    """Periodic strip sized for ``hbar``."""
    T = tau_extent(hbar, eta)
    if core is None:
        core = fiber_core(constants) if constants is not None else (-13.0, 9.0)
    return StripGrid.periodic_strip(curve.half_length, n_sigma, graded_tau(n_tau, T, core))


def fiber_core(constants, tail=35.0):
    """``tau`` interval outside which ``phi_a`` is below ``exp(-tail)``."""
    a, z = constants.a, constants.zeta_a
    return (-z / a - np.sqrt(2.0 * tail / abs(a)), -z + np.sqrt(2.0 * tail))


def assemble_full(constants, curve, hbar, eta=ETA_DEFAULT, grid=None, gamma0=None,
                  curvature=None) -> WeightedOperator2D:
    """Operator on the periodic strip ``[-L, L) x [-T, T]``.

    Parameters
    ----------
    gamma0 : float, optional
        Flux term; defaults to the circulation ``|Omega| / (2L)``.
    curvature : callable, optional
        Replaces ``k(sigma)`` (e.g. ``lambda s: 0 * s`` for the flat harness).
    """
    from .geometry import circulation

    grid = grid or default_strip(curve, hbar, eta=eta, constants=constants)
    if not grid.periodic:
        raise ValidationError("assemble_full needs a periodic strip")
    kfun = curve.curvature_at if curvature is None else curvature
    g0 = circulation(curve) if gamma0 is None else float(gamma0)
    s = grid.sigma
    op = _assemble(constants, grid, kfun(s), kfun(s + 0.5 * grid.d_sigma), hbar, eta, g0,
                   "full")
    op.k2 = curve.k2 if curvature is None else None
    return op


@dataclass
class SingleWellCurvature:
    """Extension ``k_r`` of the curvature to the line through ``s_r``.

    The circle is cut at ``s_ell``; on the line ``(s_ell, s_ell + 2L]`` the
    curvature is multiplied by a quintic blend rising over ``eta_hat`` from
    each end, and ``k_r = 0`` beyond.
    """

    curve: object
    eta_hat: float

    @property
    def interval(self):
        c = self.curve
        return c.s_ell, c.s_ell + 2.0 * c.half_length

    def blend(self, s):
        lo, hi = self.interval
        s = np.asarray(s, dtype=float)
        return smoothstep((s - lo) / self.eta_hat) * smoothstep((hi - s) / self.eta_hat)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        lo, hi = self.interval
        inside = (s > lo) & (s < hi)
        return np.where(inside, self.blend(s) * self.curve.curvature_at(s), 0.0)

    def check_unimodal(self, n=8001, margin=1e-6):
        """Unique non-degenerate global maximum at ``s_r``.

        Raises
        ------
        ExtensionNotUnimodal
            If another point reaches ``k_max`` (within ``margin``) or the
            blend lifts ``k_r`` above ``k`` somewhere.
        """
        c = self.curve
        lo, hi = self.interval
        s = np.linspace(lo, hi, n)
        k = self(s)
        i = int(np.argmax(k))
        if abs(s[i] - c.s_r) > 2.0 * (hi - lo) / n:
            raise ExtensionNotUnimodal(f"k_r peaks at {s[i]:.4f}, not at s_r = {c.s_r:.4f}")
        far = np.abs(s - c.s_r) > self.eta_hat
        if np.max(k[far]) > c.k_max - margin:
            raise ExtensionNotUnimodal("k_r reaches k_max away from s_r")
        kk = c.curvature_at(s)
        if np.any(np.abs(k) > np.abs(kk) + 1e-12):
            raise ExtensionNotUnimodal("blend increases |k|")
        k2 = float(c.curvature_second_derivative(c.s_r))
        if not k2 < 0:
            raise ExtensionNotUnimodal("maximum at s_r is degenerate")
        return True


def single_well_line(curve, hbar, n_sigma=512, n_tau=256, eta=ETA_DEFAULT, pad=1.0,
                     constants=None):
    """Line grid over the single-well interval with ``pad`` of flat wall on each side."""
    c = curve
    lo, hi = c.s_ell - pad, c.s_ell + 2.0 * c.half_length + pad
    T = tau_extent(hbar, eta)
    core = fiber_core(constants) if constants is not None else (-13.0, 9.0)
    return StripGrid.line(lo, hi, n_sigma, graded_tau(n_tau, T, core))


def assemble_single_well(constants, curve, side="r", hbar=0.1, eta=ETA_DEFAULT, grid=None,
                         gamma0=0.0, eta_hat_value=None) -> WeightedOperator2D:
    """Single-well operator on the line (Dirichlet at the ends of a padded window).

    ``side="ell"`` applies ``U f(sigma, tau) = conj f(-sigma, tau)`` to the
    assembled right-well data.
    """
    from .wkb import eta_hat as _eta_hat

    if side not in ("r", "ell"):
        raise ValidationError("side must be 'r' or 'ell'")
    eh = _eta_hat(curve.half_length) if eta_hat_value is None else eta_hat_value
    kr = SingleWellCurvature(curve, eh)
    kr.check_unimodal()
    grid = grid or single_well_line(curve, hbar, eta=eta, constants=constants)
    s = grid.sigma
    op = _assemble(constants, grid, kr(s), kr(s + 0.5 * grid.d_sigma), hbar, eta, gamma0,
                   "single-r")
    op.k2 = curve.k2
    if side == "ell":
        ns, nt = grid.shape
        perm = np.arange(ns * nt).reshape(ns, nt)[::-1].ravel()
        P = sparse.csr_matrix((np.ones(ns * nt), (np.arange(ns * nt), perm)))
        m = (P @ op.matrix @ P.T).conj().tocsc()
        mirrored = StripGrid(-s[::-1], grid.tau, False, grid.d_sigma)
        op = WeightedOperator2D(op.hbar, op.eta, op.mu, op.gamma0, op.Gamma, mirrored, m,
                                op.mass_sqrt[perm], op.weight_min, "single-ell",
                                op.curvature[::-1], constants, curve.k2)
    return op


def factor_shifted(matrix, shift):
    """Sparse ``LDL^H``-type factorization of ``matrix - shift I``.

    SuperLU runs in symmetric mode (symmetric ordering, diagonal pivots) so
    the pivots are real for a Hermitian matrix and their signs give the
    inertia.

    Returns
    -------
    (lu, n_below)
        The factorization and the number of eigenvalues below ``shift``.
    """
    n = matrix.shape[0]
    B = (matrix - shift * sparse.identity(n, dtype=matrix.dtype, format="csc")).tocsc()
    lu = spla.splu(B, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options={"SymmetricMode": True})
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise ConvergenceFailure("symmetric factorization fell back to row pivoting")
    piv = lu.U.diagonal()
    return lu, int(np.sum(piv.real < 0.0))


def lanczos_smallest(matrix, k, shift, tol=1e-10, maxiter=200, v0=None, seed=0, lu=None):
    """Eigenpairs of a Hermitian sparse matrix closest above ``shift``.

    Shift-invert Lanczos with full (twice-applied) reorthogonalization.

    Returns
    -------
    (vals, vecs, info)
        ``info`` holds the iteration count, the residual norms
        ``||A x - lambda x||`` and the number of eigenvalues below the shift.
    """
    n = matrix.shape[0]
    A = matrix.tocsc()
    below = None
    if lu is None:
        lu, below = factor_shifted(A, shift)
    dtype = np.result_type(A.dtype, np.float64)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n).astype(dtype) if v0 is None else np.asarray(v0, dtype=dtype)
    V = [v / np.linalg.norm(v)]
    alpha, beta = [], []
    m_max = min(maxiter, n)
    est = np.array([np.inf])
    for j in range(m_max):
        w = lu.solve(V[j])
        alpha.append(np.real(np.vdot(V[j], w)))
        Vm = np.column_stack(V)
        for _ in range(2):
            w -= Vm @ (Vm.conj().T @ w)
        beta.append(np.linalg.norm(w))
        m = j + 1
        if m >= k and (m % 4 == 0 or beta[j] < 1e-14 or m == m_max):
            theta, s = linalg.eigh_tridiagonal(np.array(alpha), np.array(beta[:-1]))
            order = np.argsort(-np.abs(theta))[:k]
            lam = shift + 1.0 / theta[order]
            # ||A x - lam x|| ~ beta_m |s_mi| / theta^2 for shift-invert Ritz pairs
            est = np.abs(beta[j] * s[-1, order]) / theta[order] ** 2
            bound = tol * np.maximum(1.0, np.abs(lam))
            if np.all(est <= bound) or beta[j] < 1e-14:
                X = Vm @ s[:, order]
                srt = np.argsort(lam)
                lam, X, bound = lam[srt], X[:, srt], bound[srt]
                res = np.linalg.norm(A @ X - X * lam, axis=0)
                # the estimate is asymptotic; confirm with the true residuals
                if np.all(res <= bound) or beta[j] < 1e-14:
                    return lam, X, {"iterations": m, "residuals": res, "below_shift": below}
                est = res
        if beta[j] == 0:
            break
        V.append(w / beta[j])
    raise ConvergenceFailure(f"Lanczos did not converge in {m_max} steps "
                             f"(residual estimate {np.max(est):.2e})")


@dataclass(frozen=True)
class GridConstants:
    """Band constants of the fiber discretized on a (graded) ``tau`` grid."""

    zeta: float
    beta: float
    mu_pp: float
    m3: float


def grid_constants(a, tau, xi_guess, step=0.02) -> GridConstants:
    """Band minimum, ``mu''`` and ``M3`` for the fiber on ``tau`` (Dirichlet ends).

    The 2D operator reduces to exactly this fiber when ``k = 0``, so these are
    the constants its levels approach as ``hbar -> 0``.
    """
    t = np.asarray(tau, dtype=float)
    gaps = np.diff(t)
    w = 0.5 * (gaps[1:] + gaps[:-1])
    ti = t[1:-1]
    b = model1d.b_profile(a, ti)
    off = -1.0 / gaps[1:-1] / np.sqrt(w[1:] * w[:-1])
    kin = (1.0 / gaps[1:] + 1.0 / gaps[:-1]) / w

    def solve(xi, vec=False):
        d = kin + (xi + b * ti) ** 2
        out = linalg.eigh_tridiagonal(d, off, eigvals_only=not vec, select="i",
                                      select_range=(0, 0))
        return out if vec else out[0]

    r = optimize.minimize_scalar(solve, bracket=(xi_guess - 0.1, xi_guess, xi_guess + 0.1),
                                 tol=1e-12)
    zeta, beta = float(r.x), float(r.fun)
    mu_pp = (solve(zeta + step) - 2.0 * beta + solve(zeta - step)) / step**2
    _, v = solve(zeta, vec=True)
    phi2 = v[:, 0] ** 2  # normalized in the symmetrized inner product: sum w phi^2 = 1
    m3 = float(np.sum(phi2 * inverse_b(a, ti) * (zeta + b * ti) ** 3))
    return GridConstants(zeta, beta, float(mu_pp), m3)


def level_estimate(op: WeightedOperator2D):
    """``(nu_est, margin)``: asymptotic ground level on the grid and its uncertainty."""
    c = op.constants
    gc = grid_constants(c.a, op.grid.tau, c.zeta_a)
    kmax = float(np.max(op.curvature))
    if op.k2 is None or kmax <= 0.0:
        return gc.beta, 1e-3
    q = float(np.sqrt(op.k2 * gc.m3 * gc.mu_pp / 4.0)) * op.hbar**1.5
    return gc.beta + kmax * gc.m3 * op.hbar + q, max(q, 1e-7)


def lowest_eigs(op: WeightedOperator2D, count=2, tol=1e-10, shift=None, vectors=False):
    """Lowest ``count`` eigenvalues (and residual norms) of an assembled operator.

    Without an explicit ``shift`` it is placed below the asymptotic ground
    level and lowered until the inertia count confirms that no eigenvalue
    lies below it.

    Raises
    ------
    ConvergenceFailure
        If Lanczos does not converge or an eigenvalue lies below the shift.
    """
    if shift is None:
        est, margin = level_estimate(op)
        for _ in range(30):
            shift = est - 2.0 * margin
            lu, below = factor_shifted(op.matrix, shift)
            if below == 0:
                break
            margin *= 4.0
        else:
            raise ConvergenceFailure("no shift below the spectrum found")
    else:
        lu, below = factor_shifted(op.matrix, shift)
        if below:
            raise ConvergenceFailure(f"{below} eigenvalue(s) below the shift")
    vals, vecs, info = lanczos_smallest(op.matrix, count, shift, tol=tol, lu=lu)
    info["below_shift"] = below
    info["shift"] = shift
    return (vals, vecs, info) if vectors else (vals, info)


def dense_oracle(op: WeightedOperator2D, count=2):
    """Dense Hermitian eigensolve (small grids only)."""
    if op.n > 6000:
        raise ValidationError("dense oracle limited to 6000 unknowns")
    return linalg.eigh(op.matrix.toarray(), eigvals_only=True, subset_by_index=[0, count - 1])


DEFAULT_AHK_HBARS = tuple(np.geomspace(1e-3, 1e-2, 7))


def single_well_levels(constants, curve, hbar_list, n_sigma=512, n_tau=256, eta=ETA_DEFAULT):
    """Ground levels of the right single-well operator and the grid constants."""
    nu, gc = [], None
    for hb in hbar_list:
        grid = single_well_line(curve, hb, n_sigma, n_tau, eta, constants=constants)
        op = assemble_single_well(constants, curve, "r", hb, eta, grid)
        nu.append(lowest_eigs(op, 1)[0][0])
        gc = gc or grid_constants(constants.a, grid.tau, constants.zeta_a)
    return np.array(nu), gc


def ahk_coefficient_fit(constants, curve, hbar_list=DEFAULT_AHK_HBARS, n_sigma=512, n_tau=256,
                        eta=ETA_DEFAULT, basis=(0.0, 1.0, 1.5, 2.0)):
    """Fit ``nu_1(hbar) = beta + c1 hbar + c2 hbar^{3/2} [+ c3 hbar^2]`` on the
    single-well operator.

    The ``hbar^2`` column absorbs the next term of the expansion; on curves
    flat enough for the weight guard it is comparable to ``c2 hbar^{3/2}``.

    Returns
    -------
    dict
        ``beta_fit``, ``c1_fit``, ``c2_fit``, the levels ``nu1``, the targets
        ``beta_a``, ``c1_target = k_max M3`` and ``delta3``, and
        ``remainder_exponent``: the log-log slope of
        ``nu1 - (beta + c1 hbar + delta3 hbar^{3/2})`` with the constants of
        the fiber on the same ``tau`` grid.
    """
    hs = np.asarray(sorted(hbar_list), dtype=float)
    if hs[-1] / hs[0] < 3.0 * (1.0 - 1e-9):
        raise ValidationError("hbar list must span a factor 3")
    if len(hs) < len(basis) + 1:
        raise ValidationError("need more hbar values than fit columns")
    nu, gc = single_well_levels(constants, curve, hs, n_sigma, n_tau, eta)
    X = np.column_stack([hs**p for p in basis])
    if np.linalg.cond(X) > 1e10:
        raise FitIllConditioned("AHK fit design matrix is ill-conditioned")
    coef = np.linalg.lstsq(X, nu, rcond=None)[0]
    d3 = float(np.sqrt(curve.k2 * constants.m3 * constants.c2 / 2.0))
    d3_grid = float(np.sqrt(curve.k2 * gc.m3 * gc.mu_pp / 4.0))
    rem = nu - (gc.beta + curve.k_max * gc.m3 * hs + d3_grid * hs**1.5)
    # points where the remainder is above the discretization floor
    ok = np.abs(rem) > 1e-7
    expo = float(np.polyfit(np.log(hs[ok]), np.log(np.abs(rem[ok])), 1)[0]) if ok.sum() >= 3 \
        else float("nan")
    return {"beta_fit": float(coef[0]), "c1_fit": float(coef[1]), "c2_fit": float(coef[2]),
            "hbar": hs, "nu1": nu, "beta_a": constants.beta_a,
            "c1_target": curve.k_max * constants.m3, "delta3": d3,
            "grid_constants": gc, "remainder": rem, "remainder_exponent": expo}


def gap_2d(constants, curve, hbar, gamma0=None, n_sigma=512, n_tau=256, eta=ETA_DEFAULT,
           resolution=1e3, details=False):
    """``nu_2 - nu_1`` of the full operator.

    The accuracy floor of the pair is ``max(res)^2 / (nu_3 - nu_2) + eps nu``
    (Kato-Temple bound with the residual norms of the Ritz vectors).

    Raises
    ------
    GapBelowNoiseFloor
        If the gap is below ``resolution`` times that floor.
    """
    grid = default_strip(curve, hbar, n_sigma, n_tau, eta, constants=constants)
    op = assemble_full(constants, curve, hbar, eta, grid, gamma0)
    vals, info = lowest_eigs(op, 3)
    gap = float(vals[1] - vals[0])
    res = np.max(info["residuals"][:2])
    floor = float(res**2 / (vals[2] - vals[1]) + np.finfo(float).eps * vals[1])
    if gap < resolution * floor:
        raise GapBelowNoiseFloor(f"gap {gap:.2e} below {resolution:g} x floor {floor:.1e}")
    return (gap, vals, floor) if details else gap


def gap_envelope(constants, curve, hbar, resolution=1e3, **kw):
    """Interference-free gap magnitude ``sqrt(g(gamma0)^2 + g(gamma0 + pi hbar^2 / (2L))^2)``.

    For a symmetric double well the gap is ``E |cos(L f)|`` with ``L f``
    linear in ``gamma0 / hbar^2``; the quarter-period flux shift turns the
    cosine into a sine, so the combination returns ``E``.

    Returns
    -------
    (envelope, gap_0, gap_shifted)
    """
    from .geometry import circulation

    g0 = circulation(curve)
    shift = np.pi * hbar**2 / (2.0 * curve.half_length)
    g1, _, f1 = gap_2d(constants, curve, hbar, g0, resolution=0.0, details=True, **kw)
    g2, _, f2 = gap_2d(constants, curve, hbar, g0 + shift, resolution=0.0, details=True, **kw)
    env = float(np.hypot(g1, g2))
    if env < resolution * max(f1, f2):
        raise GapBelowNoiseFloor(f"gap envelope {env:.2e} below {resolution:g} x floor")
    return env, g1, g2


# power of hbar in front of exp(-S / hbar^{1/2}) for the 2D gap
GAP_POWER_2D = 1.25
ACTION_WINDOW_2D = (10.0, 16.0)


def action_fit_2d(constants, curve, S, count=6, window=ACTION_WINDOW_2D, first_order=True,
                  **kw):
    """Fit ``ln E = c + (5/4) ln hbar - S hbar^{-1/2} [+ d hbar^{1/2}]`` to gap envelopes.

    ``hbar`` is spaced so that ``S / hbar^{1/2}`` covers ``window`` for the
    reference action ``S`` (used only to place the samples).
    """
    lo, hi = window
    hs = np.geomspace((S / hi) ** 2, (S / lo) ** 2, count)
    env = np.array([gap_envelope(constants, curve, hb, **kw)[0] for hb in hs])
    x = hs**-0.5
    y = np.log(env) - GAP_POWER_2D * np.log(hs)
    cols = [np.ones_like(hs), -x] + ([1.0 / x] if first_order else [])
    X = np.column_stack(cols)
    if np.linalg.cond(X) > 1e10:
        raise FitIllConditioned("2D action fit is ill-conditioned")
    coef = np.linalg.lstsq(X, y, rcond=None)[0]
    return {"S_fit": float(coef[1]), "log_prefactor": float(coef[0]),
            "correction": float(coef[2]) if first_order else 0.0, "hbar": hs,
            "envelope": env}


def interference_scan(constants, curve, hbar0, periods=4.0, per_period=8, **kw):
    """Gap of the full operator on a uniform grid in ``1/h = hbar^{-2}``.

    The scan spans ``periods`` times the flux period ``pi / (L gamma0)``
    starting at ``1/hbar0^2``; the period sets only the extent and the
    sampling, and the minimum spacing is measured from the data.

    Returns
    -------
    dict
        ``inv_h``, ``gap``, ``minima`` (refined positions) and ``spacing``.
    """
    from .geometry import circulation

    period = np.pi / (curve.half_length * circulation(curve))
    n = int(round(periods * per_period)) + 1
    inv_h = hbar0**-2 + period * np.arange(n) / per_period
    gaps = np.array([gap_2d(constants, curve, x**-0.5, resolution=0.0, **kw) for x in inv_h])
    minima = _refined_minima(inv_h, gaps)
    spacing = float(np.mean(np.diff(minima))) if len(minima) >= 2 else float("nan")
    return {"inv_h": inv_h, "gap": gaps, "minima": minima, "spacing": spacing,
            "period_reference": period}


def _refined_minima(x, g):
    """Interior local minima of ``g``, refined by a V-shaped fit ``|A (x - x0)|``.

    Near a zero of ``E cos`` the gap is linear on each side; the two
    neighbours of the discrete minimum fix the slopes.
    """
    out = []
    for i in range(1, len(g) - 1):
        if g[i] <= g[i - 1] and g[i] < g[i + 1]:
            if i < 2 or i > len(g) - 3:
                continue
            # left line through points i-2, i-1 and right line through i+1, i+2
            sl = (g[i - 1] - g[i - 2]) / (x[i - 1] - x[i - 2])
            sr = (g[i + 2] - g[i + 1]) / (x[i + 2] - x[i + 1])
            xl = x[i - 1] - g[i - 1] / sl
            xr = x[i + 1] - g[i + 1] / sr
            out.append(0.5 * (xl + xr))
    return np.array(out)


def localization_mass(op: WeightedOperator2D, vec, radius=None):
    """Fraction of the weighted mass of ``vec`` (symmetrized coordinates) at ``|tau| > radius``.

    The default radius is five fiber decay lengths, ``5 / sqrt(|a|)``.
    """
    a = op.constants.a
    r = 5.0 / np.sqrt(abs(a)) if radius is None else radius
    m = np.abs(np.asarray(vec).reshape(op.grid.shape)) ** 2
    out = np.abs(op.grid.tau_inner) > r
    return float(m[:, out].sum() / m.sum())


def predicted_envelope(constants, curve, hbar):
    """Flux-free splitting magnitude ``2 (|u| + |d|) / h`` at ``h = hbar^2`` in the
    ``nu`` normalization of the 2D operator."""
    from .tunneling import splitting_predict

    p = splitting_predict(constants, curve, h=hbar**2)
    return 2.0 * (abs(p.components["u"]) + abs(p.components["d"])) / hbar**2
