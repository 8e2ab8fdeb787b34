import numpy as np
import pytest

from magstep import model1d, moments
from magstep.errors import UnsupportedMoment
from magstep.model1d import Grid1D


def test_resolvent_kills_ground_state(ctx05):
    assert np.max(np.abs(moments.regularized_apply(ctx05, ctx05.phi))) < 1e-10


def test_resolvent_inverts_on_complement(ctx05, rng):
    u = ctx05.project(rng.normal(size=ctx05.tau.shape) * np.exp(-0.05 * ctx05.tau**2))
    u[0] = u[-1] = 0.0
    u = ctx05.project(u)
    r = moments.apply_fiber_operator(ctx05, moments.regularized_apply(ctx05, u))
    assert np.linalg.norm(r[1:-1] - u[1:-1]) / np.linalg.norm(u) < 1e-8


def test_i2_relation(ctx05, c05):
    fib = ctx05.fiber
    u = (c05.zeta_a + fib.b() * ctx05.tau) * ctx05.phi
    i2 = ctx05.inner(u, moments.regularized_apply(ctx05, u))
    assert abs(i2 - (0.25 - c05.mu_pp / 8.0)) < 1e-4


@pytest.mark.parametrize("a", [-0.25, -0.5, -0.75])
def test_first_moment_vanishes(a):
    ctx = moments.resolvent_context(a)
    assert abs(moments.moment(ctx, 1)) < 1e-5  # single grid: O(spacing^2)
    assert abs(moments.converged_identity_suite(a).identity_residuals["m1"]) < 1e-8


def test_m3_closed_form(c05, ctx05):
    closed = (1.0 / 3.0) * (1.0 / -0.5 - 1.0) * c05.zeta_a * c05.phi_at_0 * c05.dphi_at_0
    assert abs(moments.moment(ctx05, 3) - closed) < 1e-6
    assert c05.m3 < 0


def test_m3_vanishes_at_minus_one():
    c = moments.edge_constants(-1.0)
    assert abs(c.m3) < 1e-6


def test_unsupported_moment(ctx05):
    with pytest.raises(UnsupportedMoment):
        moments.moment(ctx05, 7)


def test_converged_identity_suite():
    rep = moments.converged_identity_suite(-0.5)
    r = rep.identity_residuals
    assert abs(r["m1"]) < 1e-8
    assert abs(r["m3_closed"]) < 1e-6
    for k in ("m2", "tau_A", "tau_A2", "b_tau2_A", "tau", "tau_dphi2", "stationarity"):
        assert abs(r[k]) < 1e-6, k
    assert abs(r["i2"]) < 1e-4
    # the as-printed variants are reported, and do not vanish for a > -1
    assert abs(rep.printed_residuals["m2"]) > 1e-3


def test_identity_suite_at_minus_one():
    rep = moments.converged_identity_suite(-1.0)
    assert abs(rep.identity_residuals["m3_zero"]) < 1e-6
    assert rep.max_residual(exclude=("i2",)) < 1e-6


def test_residuals_shrink_under_halving():
    g = Grid1D.whole_line(spacing=0.02)
    reps = []
    for grid in (g, g.refined(2)):
        c = moments.edge_constants(-0.5, grid)
        reps.append(moments.identity_suite(moments.resolvent_context(-0.5, grid, c)))
    for k in ("tau_A2", "b_tau2_A", "tau_dphi2", "m2"):
        coarse, fine = (abs(r.identity_residuals[k]) for r in reps)
        assert fine < coarse / 3.0 or fine < 1e-10, k


@pytest.mark.parametrize("a", [-0.9, -0.25, -0.1])
def test_edge_constant_bounds(a, dg):
    c = moments.edge_constants(a)
    assert abs(a) * dg.theta0 < c.beta_a < min(abs(a), dg.theta0)
    assert c.dphi_at_0 < 0 and c.mu_pp > 0 and c.m3 < 0
    assert c.c2 == pytest.approx(c.mu_pp / 2)


def test_edge_constants_at_minus_one(dg):
    c = moments.edge_constants(-1.0)
    assert abs(c.zeta_a - dg.xi0) < 1e-5 and abs(c.beta_a - dg.theta0) < 1e-5


def test_report_serializes(ctx05):
    d = moments.identity_suite(ctx05).to_dict()
    assert set(d) >= {"a", "m", "i2", "identity_residuals"}


def test_inverse_b_average_at_zero():
    v = moments.inverse_b(-0.5, np.array([-1.0, 0.0, 1.0]))
    np.testing.assert_allclose(v, [-2.0, -0.5, 1.0])


def test_b_profile():
    np.testing.assert_allclose(model1d.b_profile(-0.5, np.array([-1.0, 0.0, 2.0])),
                               [-0.5, 1.0, 1.0])
