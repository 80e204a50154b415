"""Estimators and visibility algebra against hand values and grid oracles."""

import math

import numpy as np
import pytest

from heraldlink import analysis, reference
from heraldlink.analysis import (concurrence, fit_kappa, fit_tau, hom_g2,
                                 hom_indistinguishability,
                                 v_high_order, v_indistinguishability,
                                 v_mismatch, v_snr, visibility_budget)
from heraldlink.errors import (FitError, InsufficientDataError,
                               ParameterError)


def test_v_snr_basic_shape():
    assert v_snr(1e12, 0.24) == pytest.approx(1.0)
    assert v_snr(0.24, 0.24) == pytest.approx(0.5)
    assert v_snr(48.0, 0.24) == pytest.approx(48.0 / 48.24)
    with pytest.raises(ParameterError):
        v_snr(-1.0)
    with pytest.raises(ParameterError):
        v_snr(0.0, 0.0)


def test_fit_kappa_matches_grid_search():
    pairs = [(ref.value, reference.V_SNR[det][km])
             for det, km, ref in reference.snr_cells()]
    kappa = fit_kappa(pairs)
    grid = np.arange(0.05, 0.60, 1e-5)
    s = np.array([a for a, _ in pairs])
    v = np.array([b for _, b in pairs])
    costs = [float(np.sum((s / (s + k) - v) ** 2)) for k in grid]
    brute = float(grid[int(np.argmin(costs))])
    assert kappa == pytest.approx(brute, abs=2e-5)
    assert kappa == pytest.approx(0.2405, abs=5e-4)
    worst = max(abs(v_snr(a, kappa) - b) for a, b in pairs)
    assert worst <= 0.003


def test_fit_kappa_exact_roundtrip():
    kappa_true = 0.31
    pairs = [(s, s / (s + kappa_true)) for s in (3.0, 10.0, 30.0, 50.0)]
    assert fit_kappa(pairs) == pytest.approx(kappa_true, abs=1e-5)
    with pytest.raises(InsufficientDataError):
        fit_kappa([])


def test_v_mismatch_and_tau_roundtrip():
    assert v_mismatch(0.0) == 1.0
    assert v_mismatch(50.57e-9, 50.57e-9) == pytest.approx(math.exp(-1.0))
    tau = 48e-9
    pairs = [(dt, math.exp(-((dt / tau) ** 2)))
             for dt in (1e-9, 2e-9, 5e-9, 8e-9)]
    # small mismatches: 1 - V = (dt/tau)^2 is near-exact, fit recovers tau
    assert fit_tau(pairs) == pytest.approx(tau, rel=2e-2)
    with pytest.raises(FitError):
        fit_tau([(0.0, 1.0)])
    with pytest.raises(FitError):
        fit_tau([(1e-9, 1.1)])


@pytest.mark.parametrize("g2_a,g2_b,g2_hom,expected,sigma_window", [
    (0.387, 0.348, 0.210, 0.95, 0.01),
    (0.302, 0.397, 0.215, 0.92, 0.01),
])
def test_hom_inversion_bench_pairs(g2_a, g2_b, g2_hom, expected, sigma_window):
    inv = hom_indistinguishability(g2_a, g2_b, g2_hom, 1.0)
    assert inv.eta == pytest.approx(expected, abs=sigma_window)
    assert inv.consistent


def test_hom_forward_inverse_consistency():
    for eta in (0.5, 0.9, 0.95):
        for zeta in (0.5, 1.0, 2.0):
            g = hom_g2(0.35, 0.40, eta, zeta)
            inv = hom_indistinguishability(0.35, 0.40, g, zeta)
            assert inv.eta == pytest.approx(eta, abs=1e-12)


def test_hom_inversion_sigma_propagation():
    inv = hom_indistinguishability(0.387, 0.348, 0.210, 1.0,
                                   sigmas={"g2_hom": 0.03,
                                           "g2_a": 0.02, "g2_b": 0.02})
    # the hom term enters with weight (1+zeta)^2 / (2 zeta) = 2 at zeta 1
    expected = math.hypot(2.0 * 0.03, math.hypot(0.5 * 0.02, 0.5 * 0.02))
    assert inv.sigma == pytest.approx(expected, rel=1e-12)
    wild = hom_indistinguishability(0.1, 0.1, 2.0, 1.0)
    assert not wild.consistent


def test_v_indistinguishability_from_bench_overlaps():
    v_i = v_indistinguishability(0.9475, 0.9195)
    assert v_i == pytest.approx(math.sqrt(0.9475 * 0.9195), rel=1e-12)
    assert abs(v_i - 0.935) <= 0.005


def test_v_high_order_closed_form():
    assert v_high_order(0.06, 0.25) == pytest.approx(1.0 / 1.3, rel=1e-12)
    assert round(v_high_order(0.06, 0.25), 3) == 0.769
    assert v_high_order(0.0, 0.25) == 1.0
    # full retrieval leaves only the double-emission accidental
    assert v_high_order(0.1, 1.0) == pytest.approx(1.0 / 1.2)


def test_visibility_budget_is_plain_product():
    b = visibility_budget(snr=15.0, kappa=0.24, dt_s=0.5e-9, tau_s=50.57e-9,
                          eta_wo=0.9475, eta_ro=0.9195, chi=0.06, eta_r=0.25,
                          v_p=0.94)
    assert b.v_theory == pytest.approx(
        b.v_snr * b.v_m * b.v_i * b.v_h * b.v_p, rel=1e-12)
    assert b.v_snr == pytest.approx(15.0 / 15.24)
    assert b.v_p == 0.94


def test_visibility_budget_sigma_first_order():
    b = visibility_budget(snr=15.0, kappa=0.24, dt_s=0.0, tau_s=50.57e-9,
                          eta_wo=1.0, eta_ro=1.0, chi=0.0, eta_r=0.25,
                          v_p=1.0, factor_sigmas={"v_p": 0.02})
    assert b.sigma["v_theory"] == pytest.approx(b.v_theory * 0.02, rel=1e-9)


def test_reference_v_theory_cells_within_quoted_sigma():
    """The five-factor product lands inside every quoted uncertainty."""
    kappa = fit_kappa([(ref.value, reference.V_SNR[det][km])
                       for det, km, ref in reference.snr_cells()])
    for det, km, ref in reference.v_theory_cells():
        b = visibility_budget(
            snr=reference.SNR[det][km].value, kappa=kappa,
            dt_s=reference.MISMATCH_NS[km] * 1e-9,
            tau_s=analysis.DEFAULT_TAU_S,
            eta_wo=0.9475, eta_ro=0.9195, chi=0.06, eta_r=0.25,
            v_p=reference.V_PHASE[km].value)
        assert abs(b.v_theory - ref.value) <= ref.sigma, (det, km)


def test_fit_tau_reference_cells_compromise():
    """The bundled mismatch cells imply a mode duration in the tens of ns."""
    pairs = [(reference.MISMATCH_NS[km] * 1e-9, v)
             for km, v in reference.V_MISMATCH.items()]
    tau = fit_tau(pairs)
    assert 45e-9 < tau < 70e-9


def test_fit_sinusoid_exact_recovery():
    th = np.linspace(0.0, 2.0 * np.pi, 24, endpoint=False)
    y = 100.0 * (1.0 + 0.8 * np.cos(th - 0.7))
    fit = analysis.fit_sinusoid(th, y, weights=np.ones_like(th))
    assert fit.offset == pytest.approx(100.0, rel=1e-10)
    assert fit.visibility == pytest.approx(0.8, rel=1e-10)
    assert fit.amplitude == pytest.approx(80.0, rel=1e-10)
    assert fit.phase == pytest.approx(0.7, abs=1e-10)
    assert fit.visibility_sigma >= 0.0


def test_fit_sinusoid_rejects_thin_grids():
    with pytest.raises(InsufficientDataError):
        analysis.fit_sinusoid([0.0, 1.0, 2.0], [5.0, 6.0, 7.0])
    with pytest.raises(ParameterError):
        analysis.fit_sinusoid([0.0, 1.0], [1.0, 2.0, 3.0])


class _Rec:
    def __init__(self, herald, node_clicks):
        self.herald = herald
        self.node_clicks = node_clicks


def _records_from_counts(c00, c01, c10, c11):
    recs = []
    for (a, b), m in (((0, 0), c00), ((0, 1), c01),
                      ((1, 0), c10), ((1, 1), c11)):
        recs.extend(_Rec("d1", (a, b)) for _ in range(m))
    recs.append(_Rec(None, (1, 1)))  # unheralded trial is skipped
    return recs


def test_estimate_pij_raw_fractions():
    est = analysis.estimate_pij(_records_from_counts(200, 100, 60, 40))
    assert est.n_heralds == 400
    assert est.as_tuple() == pytest.approx((0.5, 0.25, 0.15, 0.10))
    assert est.sigma["p00"] == pytest.approx(math.sqrt(0.25 / 400))


def test_estimate_pij_corrected_inverts_detection_map():
    # observed = M p_true M^T with M = [[1, 1-q], [0, q]] per node, q = 0.5
    recs = _records_from_counts(675, 125, 175, 25)
    est = analysis.estimate_pij(recs, policy="corrected", q_a=0.5, q_b=0.5)
    assert est.as_tuple() == pytest.approx((0.4, 0.2, 0.3, 0.1), abs=1e-12)


def test_estimate_pij_errors():
    recs = _records_from_counts(30, 10, 5, 5)
    with pytest.raises(InsufficientDataError):
        analysis.estimate_pij(recs)
    with pytest.raises(ParameterError):
        analysis.estimate_pij(recs, min_heralds=10, policy="bogus")
    with pytest.raises(ParameterError):
        analysis.estimate_pij(recs, min_heralds=10, policy="corrected")


# -- concurrence -----------------------------------------------------------

def test_concurrence_hand_values():
    est = concurrence(0.799, 0.10, 0.10, 0.001, 0.70)
    d = 0.70 * 0.20 / 2.0
    expected = 2.0 * d - 2.0 * math.sqrt(0.799 * 0.001)
    assert expected > 0
    assert est.concurrence == pytest.approx(expected, rel=1e-12)
    assert est.d == pytest.approx(d)


def test_concurrence_clamps_to_zero():
    est = concurrence(0.90, 0.04, 0.04, 0.02, 0.70)
    assert est.concurrence == 0.0
    assert est.sigma_c == 0.0  # no sigmas supplied


def test_concurrence_p11_zero_closed_form():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p01, p10 = rng.uniform(0.0, 0.3, 2)
        p00 = 1.0 - p01 - p10
        v = rng.uniform(0.0, 1.0)
        est = concurrence(p00, p01, p10, 0.0, v)
        assert est.concurrence == pytest.approx(v * (p01 + p10), rel=1e-12)


def test_concurrence_properties_random():
    """Clamp, monotonicity in V, and the p11 = 0 form over random inputs."""
    rng = np.random.default_rng(42)
    n = 10_000
    raw = rng.dirichlet((4.0, 1.0, 1.0, 0.2), size=n)
    vs = rng.uniform(0.0, 1.0, size=n)
    for i in range(n):
        p00, p01, p10, p11 = raw[i]
        v = vs[i]
        est = concurrence(p00, p01, p10, p11, v)
        assert est.concurrence >= 0.0
        higher = concurrence(p00, p01, p10, p11, min(1.0, v + 0.1))
        assert higher.concurrence >= est.concurrence - 1e-15
        expected = max(0.0, v * (p01 + p10) - 2.0 * math.sqrt(p00 * p11))
        assert est.concurrence == pytest.approx(expected, abs=1e-12)


def test_concurrence_sigma_propagation():
    est = concurrence(0.80, 0.09, 0.09, 0.02, 0.70,
                      sigmas={"v": 0.05, "p11": 0.005})
    grad_v = 0.18
    grad_p11 = -math.sqrt(0.80 / 0.02)
    expected = math.hypot(grad_v * 0.05, grad_p11 * 0.005)
    assert est.sigma_c == pytest.approx(expected, rel=1e-9)


def test_concurrence_rejects_bad_probabilities():
    with pytest.raises(ParameterError):
        concurrence(0.5, 0.2, 0.2, -0.1, 0.5)
    with pytest.raises(ParameterError):
        concurrence(0.5, 0.1, 0.1, 0.1, 0.5)  # sums to 0.8
