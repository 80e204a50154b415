"""Truncated number-state model: operation invariants and the readout oracle.

The oracle cross-check at the bottom re-derives the heralded fringe
visibility from plain combinatorics (geometric source statistics, one
herald photon in the low-transmission limit, binomial retrieval, exact
bunching weights on the analyzer splitter) and has to agree with the
density-matrix computation without either knowing about the other.
"""

import math

import numpy as np
import pytest

from heraldlink import fock
from heraldlink.errors import ParameterError


def test_vacuum_and_fock_state_basics():
    v = fock.vacuum_state(2, 3)
    assert v.trace() == pytest.approx(1.0)
    assert v.number_marginal(0)[0] == pytest.approx(1.0)
    s = fock.fock_state([2, 1], cutoff=3)
    assert s.number_marginal(0)[2] == pytest.approx(1.0)
    assert s.number_marginal(1)[1] == pytest.approx(1.0)
    s.assert_physical()


@pytest.mark.parametrize("chi", [0.0, 0.02, 0.06, 0.3])
def test_tms_marginal_is_geometric(chi):
    s = fock.tms_state(chi, cutoff=6)
    marg = s.number_marginal(0)
    n = np.arange(7)
    expected = (1.0 - chi) * chi ** n
    assert marg == pytest.approx(expected, abs=1e-12)
    # photon numbers of the two modes are perfectly correlated
    assert s.number_marginal(1) == pytest.approx(marg, abs=1e-12)
    assert s.leakage == pytest.approx(chi ** 7)


def test_balanced_splitter_splits_single_photon():
    s = fock.fock_state([1, 0], cutoff=2)
    out = fock.beam_splitter(s, 0, 1, 0.5)
    assert out.number_marginal(0)[1] == pytest.approx(0.5)
    assert out.number_marginal(1)[1] == pytest.approx(0.5)
    assert out.trace() == pytest.approx(1.0)


def test_hom_bunching_on_balanced_splitter():
    """|1,1> in, never one photon on each side out."""
    s = fock.fock_state([1, 1], cutoff=2)
    out = fock.beam_splitter(s, 0, 1, 0.5)
    diag = np.real(np.diag(out.matrix)).reshape(3, 3)
    assert diag[1, 1] == pytest.approx(0.0, abs=1e-12)
    assert diag[2, 0] == pytest.approx(0.5)
    assert diag[0, 2] == pytest.approx(0.5)


def test_beam_splitter_inverse_round_trip():
    # total photon number stays at the cutoff, so the map is exactly unitary
    ref = fock.fock_state([2, 1], cutoff=3)
    s = fock.beam_splitter(ref, 0, 1, 0.3, phase=0.7)
    back = fock.beam_splitter(s, 0, 1, 0.3, phase=0.7 + math.pi)
    assert np.allclose(back.matrix, ref.matrix, atol=1e-10)
    assert back.trace() == pytest.approx(1.0)


def test_loss_semigroup_composes():
    s = fock.tms_state(0.2, cutoff=4)
    once = fock.apply_loss(s, 1, 0.28)
    twice = fock.apply_loss(fock.apply_loss(s, 1, 0.7), 1, 0.4)
    assert np.allclose(once.matrix, twice.matrix, atol=1e-12)
    assert once.trace() == pytest.approx(s.trace())


def test_phase_shift_preserves_marginals():
    s = fock.tms_state(0.15, cutoff=3)
    s2 = fock.phase_shift(s, 0, 1.234)
    assert s2.number_marginal(0) == pytest.approx(s.number_marginal(0))
    assert s2.number_marginal(1) == pytest.approx(s.number_marginal(1))


@pytest.mark.parametrize("eta", [0.0, 0.3, 1.0])
def test_click_probability_single_photon(eta):
    s = fock.fock_state([1, 0], cutoff=2)
    p, post_click, post_noclick = fock.measure_click(s, 0, eta, 0.0)
    assert p == pytest.approx(eta)
    if 0.0 < eta:
        assert post_click is not None


def test_click_branches_are_exhaustive():
    """p_click is the exact POVM complement, normalized to the live trace."""
    s = fock.apply_loss(fock.tms_state(0.1, cutoff=3), 1, 0.6)
    n = np.arange(4)
    marg = s.number_marginal(1)
    p_click, _, _ = fock.measure_click(s, 1, 0.8, 0.01)
    p_noclick_abs = 0.99 * float(np.sum(marg * 0.2 ** n))
    expected = 1.0 - p_noclick_abs / s.trace()
    assert p_click == pytest.approx(expected, abs=1e-12)


def test_dark_count_floor():
    s = fock.vacuum_state(2, 2)
    p, _, _ = fock.measure_click(s, 0, 0.9, 0.05)
    assert p == pytest.approx(0.05)


def test_dephase_keeps_diagonal_and_single_excitation_block():
    amps = np.zeros(16, dtype=complex)
    # (|0,1> + |1,0> + |2,2>) / sqrt(3) over two modes at cutoff 3
    amps[1] = amps[4] = amps[10] = 1.0 / math.sqrt(3.0)
    s = fock.pure_state(amps, 2, 3)
    out = fock.dephase_multi_excitation(s, (0, 1), keep_total=1)
    assert out.trace() == pytest.approx(1.0)
    assert out.matrix[1, 4] == pytest.approx(s.matrix[1, 4])   # kept coherence
    assert out.matrix[1, 10] == pytest.approx(0.0, abs=1e-15)  # pinched
    assert out.matrix[10, 10] == pytest.approx(s.matrix[10, 10])


def test_partial_trace_consistency():
    s = fock.tensor_product(fock.tms_state(0.1, 3), fock.fock_state([2], 3))
    t = fock.partial_trace(s, 2)
    ref = fock.tms_state(0.1, 3)
    assert np.allclose(t.matrix, ref.matrix, atol=1e-12)


def test_fit_fringe_recovers_known_visibility():
    thetas = np.linspace(0.0, 2.0 * math.pi, 32, endpoint=False)
    counts = 5.0 * (1.0 + 0.62 * np.cos(thetas - 0.3))
    vis, mean, amp, phase = fock.fit_fringe(thetas, counts)
    assert vis == pytest.approx(0.62, abs=1e-9)
    assert mean == pytest.approx(5.0, abs=1e-9)
    # convention: counts = mean + amp cos(theta + phase)
    assert phase == pytest.approx(-0.3, abs=1e-9)


# -- independent sector oracle -------------------------------------------

def sector_visibility(chi, q, nmax=4, cap_total=None):
    """Fringe visibility from bare combinatorics.

    In the low-transmission limit the herald click is caused by exactly one
    write-out photon, so the heralded memory sector (na, nb) has weight
    p(na) p(nb) (na + nb) with geometric p.  The single-excitation manifold
    carries the fringe; every higher sector is dephased to a number state,
    is retrieved by independent binomial thinning with probability q per
    excitation, and lands all its photons on the counting port with the
    bosonic weight (j+k)! / (j! k! 2^(j+k)).
    """
    p = lambda n: (1.0 - chi) * chi ** n
    signal = 0.0
    dc = 0.0
    for na in range(nmax + 1):
        for nb in range(nmax + 1):
            total = na + nb
            if total == 0 or (cap_total is not None and total > cap_total):
                continue
            w = p(na) * p(nb) * total
            if total == 1:
                signal += w * q / 2.0
                dc += w * q / 2.0
                continue
            c = 0.0
            for j in range(na + 1):
                for k in range(nb + 1):
                    if j + k == 0:
                        continue
                    c += (math.comb(na, j) * q ** j * (1 - q) ** (na - j)
                          * math.comb(nb, k) * q ** k * (1 - q) ** (nb - k)
                          * math.factorial(j + k)
                          / (math.factorial(j) * math.factorial(k)
                             * 2.0 ** (j + k)))
            dc += w * c
    return signal / dc


def test_sector_capped_at_two_equals_linearized_formula():
    """Keeping only <= 2 excitations reproduces 1 / (1 + 2 chi (3 - 2 q))
    identically, not just to leading order; the geometric prefactors cancel."""
    for chi, q in [(0.06, 0.25), (0.02, 0.25), (0.1, 0.5), (0.06, 0.178)]:
        capped = sector_visibility(chi, q, nmax=2, cap_total=2)
        formula = 1.0 / (1.0 + 2.0 * chi * (3.0 - 2.0 * q))
        assert capped == pytest.approx(formula, abs=1e-12)


@pytest.mark.parametrize("chi,expected", [
    (0.06, 0.74045),
    (0.02, 0.90483),
])
def test_oracle_matches_sector_model_in_lossy_limit(chi, expected):
    oracle = fock.oracle_readout_visibility(chi, 1e-3, 0.25, 1.0)
    sector = sector_visibility(chi, 0.25, nmax=4)
    assert oracle == pytest.approx(sector, abs=2e-3)
    assert oracle == pytest.approx(expected, abs=2e-3)


def test_oracle_approaches_unity_at_vanishing_excitation():
    v = fock.oracle_readout_visibility(1e-4, 1e-3, 0.25, 1.0)
    assert v == pytest.approx(1.0, abs=1e-3)


def test_oracle_cutoff_converged():
    v4 = fock.oracle_readout_visibility(0.06, 1e-3, 0.25, 1.0, cutoff=4)
    v5 = fock.oracle_readout_visibility(0.06, 1e-3, 0.25, 1.0, cutoff=5)
    assert abs(v4 - v5) < 1e-3


def test_oracle_cutoff_converged_at_high_excitation():
    v4 = fock.oracle_readout_visibility(0.1, 1e-3, 0.25, 1.0, cutoff=4)
    v5 = fock.oracle_readout_visibility(0.1, 1e-3, 0.25, 1.0, cutoff=5)
    assert abs(v4 - v5) < 1e-3


def test_oracle_without_dephasing_is_higher():
    """Multi-photon coherence surviving the herald inflates the fringe."""
    on = fock.oracle_readout_visibility(0.06, 1e-3, 0.25, 1.0)
    off = fock.oracle_readout_visibility(0.06, 1e-3, 0.25, 1.0, dephase=False)
    assert off > on + 0.05


def test_oracle_rejects_bad_domains():
    with pytest.raises(ParameterError):
        fock.oracle_readout_visibility(1.2, 1.0, 0.25, 1.0)
    with pytest.raises(ParameterError):
        fock.oracle_readout_visibility(0.06, 1.0, 0.25, 1.0, cutoff=2)
