import numpy as np
import pytest

from magstep import wkb
from magstep.errors import GridMismatch, OrderNotAvailable


@pytest.fixture(scope="module")
def setup84(ellipse84):
    return wkb.prepare(-0.5, ellipse84)


@pytest.fixture(scope="module")
def setup21(ellipse21):
    return wkb.prepare(-0.5, ellipse21)


def test_delta_ladder(setup84, ellipse84):
    c = setup84.constants
    d = setup84.delta
    assert d[0] == c.beta_a and d[1] == 0.0
    assert d[2] == pytest.approx(c.m3 * ellipse84.k_max, rel=1e-12)
    assert d[3] == pytest.approx(np.sqrt(ellipse84.k2 * c.m3 * c.c2 / 2), rel=1e-12)
    hb = 0.07
    ladder = d[0] + d[2] * hb**2 + d[3] * hb**3
    h = hb**2
    ahk = c.beta_a + ellipse84.k_max * c.m3 * h + d[3] * h**1.5
    assert abs(ladder - ahk) < 1e-12


def test_i2_matches_curvature(setup84):
    assert setup84.I2 == pytest.approx(0.25 - setup84.constants.mu_pp / 8, abs=1e-4)


def test_transport_at_well(setup84):
    tr = setup84.transport
    assert float(tr.phi(0.0)) == pytest.approx(0.0, abs=1e-14)
    assert tr.modulus(np.array([0.0]))[0] == pytest.approx((tr.g / np.pi) ** 0.25, rel=1e-12)
    x = np.linspace(-1.5, 1.5, 31)
    assert np.all(tr.modulus(x) > 0)
    assert np.all(np.isfinite(tr.dalpha(x)))


def test_transport_axis_normalization(ellipse21, setup21):
    ep = setup21.effpot
    well, _ = wkb.transport_amplitude(ep, [ellipse21.s_r, 0.0])
    axis, _ = wkb.transport_amplitude(ep, [ellipse21.s_r, 0.0], normalization="axis")
    np.testing.assert_allclose(well, axis, rtol=1e-6)


def test_phase_constant_without_coupling(setup21, ellipse21):
    mod, alpha = wkb.transport_amplitude(setup21.effpot, ellipse21.s_r + np.linspace(-1, 1, 9))
    assert np.max(np.abs(alpha)) < 1e-14
    assert np.all(np.isfinite(mod)) and np.allclose(mod, mod[::-1])
    assert wkb.alpha_a(setup21.effpot, (0.0, 0.0)) == 0.0


def test_F_vanishes_at_well_and_is_linear(setup21, ellipse21):
    s_r = ellipse21.s_r
    F0 = wkb.compute_F(setup21.constants, setup21.ctx, ellipse21, [s_r])
    assert abs(F0[0]) < 1e-10
    x = np.geomspace(1e-3, 1e-2, 6)
    F = np.abs(wkb.compute_F(setup21.constants, setup21.ctx, ellipse21, s_r + x))
    dphi = np.abs(setup21.transport.dphi(x))
    slope = np.polyfit(np.log(dphi), np.log(F), 1)[0]
    # F carries one factor of Phi' (see the decisions ledger)
    assert slope == pytest.approx(1.0, abs=0.1)
    assert np.isrealobj(F)


def test_alpha_grid_stability(ellipse21, setup21):
    a1 = wkb.alpha_a(setup21.effpot, setup21.K)
    c = setup21.constants
    fine = wkb.prepare(c, ellipse21, wkb.wkb_grid(-0.5, c.zeta_a, spacing=0.01))
    a2 = wkb.alpha_a(fine.effpot, fine.K)
    assert np.isfinite(a1)
    assert abs(a1 - a2) < 1e-4


def test_b1_orthogonal(setup84, ellipse84):
    qm = wkb.assemble_quasimode(setup84, ellipse84, 0.1, 3)
    w = setup84.ctx.grid.weights()
    b1 = qm.b_profiles[1]
    assert np.max(np.abs(b1 @ (w * setup84.ctx.phi))) < 1e-10 * max(1.0, np.max(np.abs(b1)))
    assert qm.Phi[np.argmin(np.abs(qm.sigma - ellipse84.s_r))] < 1e-3
    assert qm.profile_rows().shape == (len(qm.sigma), 4)


def test_leading_norm(setup84):
    assert wkb.leading_norm(setup84, 1e-3) == pytest.approx(1.0, rel=0.1)


def test_residual_orders(setup84, ellipse84):
    hb = np.geomspace(0.05, 0.2, 5)
    slopes = wkb.residual_slopes(setup84, ellipse84, hb, orders=(1, 3))
    assert slopes[1]["slope"] >= 0.75
    assert slopes[3]["slope"] >= 1.7


def test_order3_beats_order0(setup84, ellipse84):
    r0 = wkb.residual_norm(wkb.assemble_quasimode(setup84, ellipse84, 0.05, 0))["sup"]
    r3 = wkb.residual_norm(wkb.assemble_quasimode(setup84, ellipse84, 0.05, 3))["sup"]
    assert r3 / r0 < 0.1


def test_order_guard(setup84, ellipse84):
    with pytest.raises(OrderNotAvailable):
        wkb.assemble_quasimode(setup84, ellipse84, 0.1, 4)


def test_grid_mismatch(setup84, ellipse84):
    qm = wkb.assemble_quasimode(setup84, ellipse84, 0.1, 0)
    op = wkb.ConjugatedOperator.from_setup(setup84)
    op.tau = op.tau[:-1]
    with pytest.raises(GridMismatch):
        wkb.residual_norm(qm, op)


def test_eta_hat():
    assert wkb.eta_hat(10.0) == 0.125
    assert wkb.eta_hat(0.4) == pytest.approx(0.05)
