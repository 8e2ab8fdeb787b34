import numpy as np
import pytest

from magstep import geometry, moments, tunneling
from magstep.errors import DegenerateConstants, SymmetryViolation, ValidationError


def test_potential_shape(effpot21, ellipse21):
    assert float(effpot21(ellipse21.s_r)) == pytest.approx(0.0, abs=1e-12)
    v = effpot21(ellipse21.s)
    i = int(np.argmax(v))
    assert min(abs(abs(ellipse21.s[i]) - ellipse21.half_length), abs(ellipse21.s[i])) < 1e-2
    assert np.min(effpot21.samples) >= 0


def test_potential_frequency(effpot21, ellipse21):
    g = tunneling.local_frequency_fit(effpot21, ellipse21.s_r)
    assert g == pytest.approx(effpot21.g, rel=1e-4)


def test_minus_one_degenerate(ellipse21):
    with pytest.raises(DegenerateConstants):
        tunneling.effective_potential(moments.edge_constants(-1.0), ellipse21)


def test_unvalidated_curve_rejected(c05):
    c = geometry.build_fourier_curve(1.0, {2: -0.1}, validate=False)
    with pytest.raises(ValidationError):
        tunneling.effective_potential(c05, c)


def test_ellipse_paths_equal(agmon21):
    assert abs(agmon21.S_u - agmon21.S_d) < 1e-8
    assert agmon21.A_u == pytest.approx(agmon21.A_d, rel=1e-10)


def test_action_matches_riemann_sum(effpot21, ellipse21, agmon21):
    n = 10**6
    lo, hi = ellipse21.s_ell, ellipse21.s_r
    x = lo + (hi - lo) * (np.arange(n) + 0.5) / n
    brute = float(np.sum(effpot21.sqrt(x)) * (hi - lo) / n)
    assert agmon21.S_u == pytest.approx(brute, rel=1e-6)


def test_asymmetric_paths(c05, asym_curve):
    ag = tunneling.agmon(tunneling.effective_potential(c05, asym_curve))
    assert abs(ag.S_u - ag.S_d) > 0.05
    assert ag.S == min(ag.S_u, ag.S_d)
    assert ag.dominant == ("u" if ag.S_u < ag.S_d else "d")


def test_agmon_profiles(agmon21, ellipse21):
    i = int(np.argmin(np.abs(agmon21.s - ellipse21.s_r)))
    assert agmon21.phi_r[i] < 1e-2
    assert np.all(agmon21.phi_r >= 0)


def test_interference_on_symmetric_curve(c05, effpot21, agmon21):
    hs = np.linspace(0.0099, 0.0101, 400)
    preds = [tunneling.splitting_predict(c05, effpot21.curve, 0.0, h, effpot=effpot21,
                                         ag=agmon21) for h in hs]
    gaps = np.array([p.gap_predicted for p in preds])
    env = np.array([2 * (abs(p.components["u"]) + abs(p.components["d"])) for p in preds])
    cosine = np.array([abs(np.cos(p.phase["L_f"])) for p in preds])
    np.testing.assert_allclose(gaps, env * cosine, rtol=1e-10, atol=1e-300)
    assert np.min(gaps / env) < 0.05


def test_dominant_path_limit(c05, asym_curve):
    ep = tunneling.effective_potential(c05, asym_curve)
    ag = tunneling.agmon(ep)
    h = 1e-7
    p = tunneling.splitting_predict(c05, asym_curve, 0.0, h, effpot=ep, ag=ag)
    dom, sub = (p.components["d"], p.components["u"]) if ag.dominant == "d" else \
        (p.components["u"], p.components["d"])
    ratio = p.gap_predicted / (2 * abs(dom))
    assert abs(ratio - 1) <= 1.01 * abs(sub / dom)
    # the subdominant path is suppressed by exp(-|S_u - S_d| / h^{1/4}) times a fixed prefactor
    dS = abs(ag.S_u - ag.S_d)
    scaled = []
    for hh in (1e-7, 1e-6):
        q = tunneling.splitting_predict(c05, asym_curve, 0.0, hh, effpot=ep, ag=ag).components
        scaled.append(min(abs(q["u"]), abs(q["d"])) / max(abs(q["u"]), abs(q["d"]))
                      * np.exp(dS / hh**0.25))
    assert scaled[0] == pytest.approx(scaled[1], rel=1e-10)


def test_regression_baseline(c05, ellipse21):
    p = tunneling.splitting_predict(c05, ellipse21, 0.0, 0.01)
    assert p.gap_predicted == pytest.approx(4.10592862630968e-4, rel=1e-6)


def test_neumann_structure(ellipse21, dg):
    p = tunneling.splitting_predict_neumann(ellipse21, 0.01)
    assert p.gap_predicted == pytest.approx(2.9371658779399806e-6, rel=1e-6)
    ep = tunneling.effective_potential(dg, ellipse21)
    assert ep.provenance == "neumann"
    assert ep.coef == pytest.approx(-2 * dg.c1 / dg.mu_pp)
    assert p.phase["zeta"] == dg.xi0


def test_transversal_matches_closed_curve_arc(c05, ellipse21, effpot21, agmon21):
    arc = tunneling.ArcSpec(ellipse21.curvature_at, ellipse21.s_r, ellipse21.k_max,
                            ellipse21.k2, ellipse21.s_r)
    r = tunneling.splitting_predict_transversal(arc, c05, 0.01)
    assert r["S_a"] == pytest.approx(agmon21.S_u, rel=1e-8)


def test_transversal_rejects_flat_arc(c05):
    arc = tunneling.ArcSpec(lambda s: np.ones_like(np.asarray(s, dtype=float)), 1.0, 1.0, 0.0, 1.0)
    with pytest.raises(SymmetryViolation):
        tunneling.splitting_predict_transversal(arc, c05, 0.01)


def test_transversal_baseline(c05):
    r = tunneling.splitting_predict_transversal(tunneling.cosine_bump_arc(), c05, 0.01)
    assert r["S_a"] == pytest.approx(0.34774041258350896, rel=1e-8)
    assert r["gap_predicted"] == pytest.approx(3.0138684610631175e-4, rel=1e-6)


def test_effective_gap_prediction_without_flux(c05, ellipse21):
    p = tunneling.splitting_predict(c05, ellipse21, 0.0, 1e-4)
    eff = tunneling.effective_gap_prediction(p)
    assert eff == pytest.approx(2 * (abs(p.components["u"]) + abs(p.components["d"])) / 1e-6)
