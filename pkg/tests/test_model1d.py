import numpy as np
import pytest

from magstep import model1d
from magstep.errors import ValidationError
from magstep.model1d import Grid1D


def test_landau_level_whole_line():
    assert model1d.band_function(1.0, 0.0) == pytest.approx(1.0, abs=1e-6)


def test_neumann_at_zero_frequency():
    assert model1d.solve_neumann_fiber(0.0).mu == pytest.approx(1.0, abs=1e-6)


def test_de_gennes_constants(dg):
    assert 0.5 < dg.theta0 < 1.0
    assert abs(dg.xi0 + np.sqrt(dg.theta0)) < 1e-5
    assert dg.theta0 == pytest.approx(0.5901, abs=1e-4)
    assert dg.c1 == pytest.approx(dg.u0_at_0**2 / 3.0)


def test_neumann_minimum_is_unique(dg):
    for dx in (-0.1, 0.1):
        assert model1d.solve_neumann_fiber(dg.xi0 + dx).mu > dg.theta0


def test_a_minus_one_is_de_gennes(dg):
    zeta, beta = model1d.band_minimize(-1.0)
    assert abs(zeta - dg.xi0) < 1e-5
    assert abs(beta - dg.theta0) < 1e-5
    fib = model1d.solve_fiber(-1.0, zeta)
    assert np.max(np.abs(fib.phi - fib.phi[::-1])) < 1e-6


def test_a_minus_one_curvature_matches_de_gennes(dg):
    mu_pp = model1d.band_second_derivative(-1.0)
    assert mu_pp == pytest.approx(dg.mu_pp, rel=1e-4)


def test_half_field_band_minimum(dg, c05):
    assert 0.5 * dg.theta0 < c05.beta_a < 0.5
    fib = model1d.solve_fiber(-0.5, c05.zeta_a)
    assert fib.mu == pytest.approx(c05.beta_a, abs=1e-12)
    w = fib.grid.weights()
    assert abs(np.sum(w * (c05.zeta_a + fib.b() * fib.tau) * fib.phi**2)) < 1e-6


def test_second_derivative_cross_check(c05):
    parab = model1d.parabolic_second_derivative(-0.5, c05.zeta_a)
    assert abs(parab - c05.mu_pp) < 1e-4


def test_ground_state_normalized_positive(c05):
    fib = model1d.solve_fiber(-0.5, c05.zeta_a)
    assert fib.norm() == pytest.approx(1.0, abs=1e-12)
    assert np.min(fib.phi) > -1e-12
    assert fib.dphi_at_0_left < 0


def test_second_eigenvalue_above_first(c05):
    assert model1d.second_eigenvalue(-0.5, c05.zeta_a) > c05.beta_a + 0.1


def test_grid_requires_zero_node():
    nodes = 0.05 + 0.1 * np.arange(-50, 50)
    grid = Grid1D(float(nodes[0]), float(nodes[-1]), len(nodes), nodes)
    with pytest.raises(ValidationError):
        model1d.solve_fiber(-0.5, -0.6, grid)


def test_field_ratio_range():
    with pytest.raises(ValidationError):
        model1d.solve_fiber(-1.5, 0.0)
    with pytest.raises(ValidationError):
        model1d.band_minimize(0.2)


def test_refinement_is_second_order():
    base = Grid1D.whole_line(spacing=0.04)
    mus = [model1d.band_function(-0.5, -0.66, base.refined(f)) for f in (1, 2, 4)]
    ratio = (mus[0] - mus[1]) / (mus[1] - mus[2])
    assert ratio == pytest.approx(4.0, rel=0.05)
