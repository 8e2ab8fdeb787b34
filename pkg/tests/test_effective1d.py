import numpy as np
import pytest
from scipy import linalg

from magstep import effective1d as E
from magstep import tunneling
from magstep.errors import GapBelowNoiseFloor, ValidationError


def _flat(effpot, h, n, c):
    return E.assemble(effpot, h, n, potential=lambda s: np.full_like(s, c))


def test_constant_potential_dispersion(effpot21):
    n, h, c = 1024, 0.3, 0.7
    op = _flat(effpot21, h, n, c)
    L = effpot21.curve.half_length
    ds = 2 * L / n
    vals = linalg.eigvalsh(op.dense())[:5]
    m = np.array([0, 1, 1, 2, 2])
    # exact discrete dispersion, and the continuum within O(ds^2)
    disc = op.scale * (np.sqrt(h) * (2 * np.sin(np.pi * m * ds / (2 * L)) / ds) ** 2 + c)
    cont = op.scale * (np.sqrt(h) * (np.pi * m / L) ** 2 + c)
    np.testing.assert_allclose(vals, disc, rtol=1e-10)
    np.testing.assert_allclose(vals, cont, rtol=1e-4)


def test_zero_potential_pair(effpot21):
    op = _flat(effpot21, 1.0, 2048, 0.0)
    nu1, nu2, gap = _pair(op)
    L = effpot21.curve.half_length
    assert abs(nu1) < 1e-10
    assert nu2 == pytest.approx(0.5 * effpot21.mu_pp * (np.pi / L) ** 2, rel=1e-5)


def _pair(op):
    vals = linalg.eigvalsh(op.dense())[:2]
    return vals[0], vals[1], vals[1] - vals[0]


def test_even_split_matches_dense(effpot21):
    op = E.assemble(effpot21, 1e-3, 512)
    nu1, nu2, gap = E.lowest_pair(op)
    vals = linalg.eigvalsh(op.dense())[:2]
    np.testing.assert_allclose([nu1, nu2], vals, atol=1e-12)


def test_non_even_path(effpot21):
    op = E.assemble(effpot21, 1e-2, 512, potential=lambda s: effpot21(s) + 0.01 * np.sin(s))
    nu1, nu2, gap = E.lowest_pair(op)
    vals = linalg.eigvalsh(op.dense())[:2]
    np.testing.assert_allclose([nu1, nu2], vals, atol=1e-12)
    assert gap > 0


def test_ground_state_simple_and_gap_small(effpot21):
    nu1, nu2, gap = E.lowest_pair(E.assemble(effpot21, 0.02, 1024))
    assert gap > 0
    assert gap / nu1 < 0.5


def test_grid_refinement_second_order(effpot21):
    nus = [E.lowest_pair(E.assemble(effpot21, 1e-3, n))[0] for n in (512, 1024, 2048)]
    assert (nus[0] - nus[1]) / (nus[1] - nus[2]) == pytest.approx(4.0, rel=0.1)


def test_gap_decreases_along_sweep(effpot21, agmon21):
    rows = E.gap_sweep(effpot21, E.default_h_list(agmon21.S, 8))
    gaps = [r[3] for r in rows]
    assert np.all(np.diff(gaps) > 0)


def test_harmonic_ladder(effpot21):
    errs = []
    for h in (1e-4, 1e-6, 1e-8):
        r = E.harmonic_levels_check(effpot21, h, n=2048)
        errs.append(abs(r["spacing_rel_err"][0]))
    assert errs[0] > errs[1] > errs[2]
    slope = np.polyfit(np.log([1e-4, 1e-6, 1e-8]), np.log(errs), 1)[0]
    assert slope > 0
    assert r["ratio"] == pytest.approx(2.0, rel=0.05)


def test_flatter_well_spacing(effpot21):
    h = 1e-8
    a = E.harmonic_levels_check(effpot21, h, n=2048)["spacing"][0]
    b = E.harmonic_levels_check(effpot21.scaled(0.5), h, n=2048)["spacing"][0]
    assert a / b == pytest.approx(np.sqrt(2.0), rel=0.05)


def test_agmon_exponent_fit(effpot21, agmon21):
    hs = E.resolvable_h_list(effpot21, agmon21.S)
    fit = E.gap_exponent_fit(effpot21, hs)
    assert abs(fit["S_fit"] / agmon21.S - 1) < 0.05
    assert len(hs) == 12


def test_min_rule(c05, asym_curve):
    ep = tunneling.effective_potential(c05, asym_curve)
    ag = tunneling.agmon(ep)
    fit = E.gap_exponent_fit(ep, E.resolvable_h_list(ep, ag.S))
    lo, hi = sorted((ag.S_u, ag.S_d))
    assert abs(fit["S_fit"] / lo - 1) < 0.05
    assert abs(fit["S_fit"] - lo) < abs(fit["S_fit"] - hi)


def test_doubled_potential_scaling(effpot21, agmon21):
    ep2 = effpot21.scaled(2.0)
    S2 = tunneling.agmon(ep2).S
    assert S2 == pytest.approx(np.sqrt(2) * agmon21.S, rel=1e-8)
    fit = E.gap_exponent_fit(ep2, E.resolvable_h_list(ep2, S2))
    assert fit["S_fit"] / agmon21.S == pytest.approx(np.sqrt(2), rel=0.05)


def test_fit_guards(effpot21, agmon21):
    with pytest.raises(ValidationError):
        E.gap_exponent_fit(effpot21, [1e-4, 2e-4])
    with pytest.raises(GapBelowNoiseFloor):
        E.gap_exponent_fit(effpot21, np.geomspace(1e-9, 1e-7, 5))
    with pytest.raises(ValidationError):
        E.default_h_list(agmon21.S, window=(10, 40))


def test_assemble_guards(effpot21):
    with pytest.raises(ValidationError):
        E.assemble(effpot21, 0.01, n=64)
    with pytest.raises(ValidationError):
        E.assemble(effpot21, -1.0)
