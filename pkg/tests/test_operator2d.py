import numpy as np
import pytest
from scipy import sparse

from magstep import geometry, model1d, operator2d as o
from magstep.errors import ConvergenceFailure, GridGuardFailure, WeightNotPositive

HB = 0.1


@pytest.fixture(scope="module")
def strip(ellipse84, c05):
    return o.default_strip(ellipse84, HB, 96, 64, constants=c05)


@pytest.fixture(scope="module")
def full_op(c05, ellipse84, strip):
    return o.assemble_full(c05, ellipse84, HB, grid=strip)


@pytest.fixture(scope="module")
def line(ellipse84, c05):
    return o.single_well_line(ellipse84, HB, 128, 64, constants=c05)


def test_cutoff_profile():
    x = np.linspace(-3, 3, 601)
    c = o.cutoff(x)
    assert np.all(c[np.abs(x) <= 1] == 1.0)
    assert np.all(c[np.abs(x) >= 2] == 0.0)
    assert np.all(np.diff(c[x >= 0]) <= 0)
    assert o.cutoff_scale(0.01, 0.125) == pytest.approx(0.01 ** 0.75)
    assert o.tau_extent(0.01) >= 2 / o.cutoff_scale(0.01)


def test_graded_tau_contains_zero():
    tau = o.graded_tau(64, 20.0, (-8.0, 6.0))
    assert np.any(tau == 0.0)
    assert tau[0] == pytest.approx(-20.0) and tau[-1] == pytest.approx(20.0)
    assert np.all(np.diff(tau) > 0)


def test_exact_symmetry(full_op):
    assert full_op.symmetry_defect() == 0.0
    assert full_op.weight_min >= o.WEIGHT_GUARD


def test_dense_oracle_tiny(c05, ellipse84):
    grid = o.default_strip(ellipse84, HB, 24, 32, constants=c05)
    op = o.assemble_full(c05, ellipse84, HB, grid=grid)
    vals, info = o.lowest_eigs(op, 3, tol=1e-12)
    np.testing.assert_allclose(vals, o.dense_oracle(op, 3), atol=1e-10)
    assert max(info["residuals"]) <= 1e-10
    assert info["below_shift"] == 0


def test_flat_harness_matches_fiber_band(c05, ellipse84):
    gr = model1d.Grid1D.whole_line(half_width=12.0, spacing=0.05)
    grid = o.StripGrid.periodic_strip(ellipse84.half_length, 64, o.uniform_tau(gr))
    op = o.assemble_full(c05, ellipse84, HB, grid=grid, curvature=lambda s: 0 * s)
    vals, _ = o.lowest_eigs(op, 3)
    L, g0 = ellipse84.half_length, geometry.circulation(ellipse84)
    # dual lattice of the gauge-shifted periodic problem
    m0 = -(g0 + c05.zeta_a) * L / (HB * np.pi)
    ms = np.arange(int(m0) - 6, int(m0) + 7)
    mus = np.sort([model1d.band_function(-0.5, -(HB * np.pi * m / L + g0), gr) for m in ms])
    assert abs(vals[0] - mus[0]) < 1e-9
    # higher dual frequencies carry the O(d_sigma^2) lattice dispersion
    np.testing.assert_allclose(vals[1:], mus[1:3], atol=1e-6)
    fine = min(model1d.band_function(-0.5, -(HB * np.pi * m / L + g0)) for m in ms)
    assert abs(vals[0] - fine) < 1e-4


def test_gauge_invariance(c05, ellipse84, strip, full_op):
    g = geometry.circulation(ellipse84) + 3 * HB**2 * np.pi / ellipse84.half_length
    shifted = o.assemble_full(c05, ellipse84, HB, grid=strip, gamma0=g)
    a, _ = o.lowest_eigs(full_op, 3)
    b, _ = o.lowest_eigs(shifted, 3)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_below_essential_spectrum(c05, ellipse84):
    hb = 0.15
    grid = o.default_strip(ellipse84, hb, 96, 64, constants=c05)
    vals, _ = o.lowest_eigs(o.assemble_full(c05, ellipse84, hb, grid=grid), 1)
    assert vals[0] < abs(c05.a)


def test_weight_guard(c05, ellipse21):
    with pytest.raises(WeightNotPositive):
        o.assemble_full(c05, ellipse21, 0.15)


def test_grid_guard(c05, ellipse84):
    tau = o.graded_tau(32, 6.0, (-4.0, 3.0))
    grid = o.StripGrid.periodic_strip(ellipse84.half_length, 24, tau)
    with pytest.raises(GridGuardFailure):
        o.assemble_full(c05, ellipse84, 0.01, grid=grid)


def test_single_well_left_right_and_flux(c05, ellipse84, line):
    r = o.assemble_single_well(c05, ellipse84, "r", HB, grid=line)
    ell = o.assemble_single_well(c05, ellipse84, "ell", HB, grid=line)
    flux = o.assemble_single_well(c05, ellipse84, "r", HB, grid=line,
                                  gamma0=geometry.circulation(ellipse84))
    vr, vecs, _ = o.lowest_eigs(r, 2, vectors=True)
    np.testing.assert_allclose(vr, o.lowest_eigs(ell, 2)[0], atol=1e-10)
    np.testing.assert_allclose(vr, o.lowest_eigs(flux, 2)[0], atol=1e-10)
    assert o.localization_mass(r, vecs[:, 0]) < 1e-6


def test_extension_unimodal(ellipse84):
    from magstep.wkb import eta_hat

    ext = o.SingleWellCurvature(ellipse84, eta_hat(ellipse84.half_length))
    ext.check_unimodal()
    s = np.linspace(*ext.interval, 4001)
    k = ext(s)
    assert s[np.argmax(k)] == pytest.approx(ellipse84.s_r, abs=5e-3)


def test_refinement_monotone(c05, ellipse84):
    nus = []
    for ns, nt in [(64, 48), (128, 96), (256, 192)]:
        g = o.single_well_line(ellipse84, 0.01, ns, nt, constants=c05)
        nus.append(o.lowest_eigs(o.assemble_single_well(c05, ellipse84, "r", 0.01, grid=g), 1)[0][0])
    d = np.diff(nus)
    assert np.all(d < 0) and abs(d[1]) < abs(d[0])


def test_lanczos_convergence_failure():
    m = sparse.diags(np.arange(1.0, 201.0)).tocsc()
    vals, _, info = o.lanczos_smallest(m, 3, shift=0.5)
    np.testing.assert_allclose(vals, [1, 2, 3], atol=1e-10)
    with pytest.raises(ConvergenceFailure):
        o.lanczos_smallest(m, 3, shift=0.5, maxiter=2)


def test_inertia_count(c05, ellipse84):
    grid = o.default_strip(ellipse84, HB, 48, 32, constants=c05)
    op = o.assemble_full(c05, ellipse84, HB, grid=grid)
    vals = o.dense_oracle(op, 4)
    _, below = o.factor_shifted(op.matrix, 0.5 * float(vals[2] + vals[3]))
    assert below == 3


def test_degenerate_pair_at_interference_zero(c05, ellipse84, strip):
    # the flux period of the gap is hbar^2 pi / L; scan half of it for a crossing
    L = ellipse84.half_length
    g0 = geometry.circulation(ellipse84)
    gaps, envs = [], []
    for t in np.linspace(0.0, 0.5, 13):
        g = g0 + t * HB**2 * np.pi / L
        v, _ = o.lowest_eigs(o.assemble_full(c05, ellipse84, HB, grid=strip, gamma0=g), 2)
        gaps.append(v[1] - v[0])
    gaps = np.array(gaps)
    assert gaps.min() < 0.1 * gaps.max()


def test_export_coo(tmp_path, c05, ellipse84):
    grid = o.default_strip(ellipse84, HB, 24, 32, constants=c05)
    op = o.assemble_full(c05, ellipse84, HB, grid=grid)
    path = tmp_path / "m.txt"
    op.export_coo(path)
    data = np.loadtxt(path)
    assert len(data) == op.matrix.nnz


def test_ahk_fit_small(c05, ellipse84):
    # coarse version of the acceptance fit: structure and the leading coefficient
    fit = o.ahk_coefficient_fit(c05, ellipse84, n_sigma=256, n_tau=128)
    assert abs(fit["beta_fit"] / fit["beta_a"] - 1) < 0.01
    assert abs(fit["c1_fit"] / fit["c1_target"] - 1) < 0.10
