import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eseem.analytic import (
    Branches3p,
    FivePulse,
    ThreePulse,
    TwoPulse,
    WeightTableError,
    bernoulli_mean,
    nuclear_frequencies,
    product_combine,
    v2p_single,
    v3p_single,
    v5p_single,
    weighted_transition_sum,
)
from eseem.constants import TWO_PI
from eseem.refdata import transition_weights
from eseem.spin_hamiltonian import FictitiousSpin, Transition, fictitious_reduction

from oracles import oracle_trace

BARE = Transition(m=0, branch=0, m_s_alpha=0.5, m_s_beta=-0.5, omega_s=0.0)


def make_fs(a_hz, b_hz, omega_i_hz):
    return fictitious_reduction(
        BARE, TWO_PI * a_hz, TWO_PI * b_hz, TWO_PI * omega_i_hz
    )


def commensurate_fs(f_up_hz, f_dn_hz, b_hz=30e3):
    """Parameters whose conditional frequencies are exactly (f_up, f_dn)."""
    wu, wd, b = TWO_PI * f_up_hz, TWO_PI * f_dn_hz, TWO_PI * b_hz
    su = np.sqrt(wu**2 - b**2 / 4)
    sd = np.sqrt(wd**2 - b**2 / 4)
    return make_fs((su - sd) / TWO_PI, b_hz, (su + sd) / (2 * TWO_PI))


# ---------------------------------------------------------------------------
# sequences
# ---------------------------------------------------------------------------

def test_sequence_validation():
    with pytest.raises(ValueError):
        TwoPulse(np.array([0.0, 2e-6, 1e-6]))
    with pytest.raises(ValueError):
        ThreePulse(-1e-6, np.array([0.0, 1e-6]))
    seq = FivePulse(1e-6, 2e-6, np.array([0.0, 1e-5]))
    assert seq.kind == "5p"
    assert np.array_equal(seq.grid, [0.0, 1e-5])


# ---------------------------------------------------------------------------
# nuclear frequencies
# ---------------------------------------------------------------------------

def test_frequencies_no_pseudosecular():
    fs = make_fs(50e3, 0.0, 200e3)
    nf = nuclear_frequencies(fs)
    assert nf.k == 0.0
    assert nf.omega_up == pytest.approx(TWO_PI * 225e3)
    assert nf.omega_dn == pytest.approx(TWO_PI * 175e3)


def test_frequencies_uncoupled():
    fs = make_fs(0.0, 0.0, 120e3)
    nf = nuclear_frequencies(fs)
    assert nf.omega_up == nf.omega_dn == pytest.approx(TWO_PI * 120e3)
    assert nf.k == 0.0


def test_frequencies_weak_coupling_depth():
    fs = make_fs(100.0, 80.0, 850.0 * 1e3)
    nf = nuclear_frequencies(fs)
    assert nf.k == pytest.approx((80.0 / 850e3) ** 2, rel=1e-5)


def test_depth_identity():
    fs = make_fs(37e3, 21e3, 55e3)
    nf = nuclear_frequencies(fs)
    lhs = nf.k * (nf.omega_up * nf.omega_dn) ** 2
    rhs = (fs.b * fs.omega_i_eff) ** 2
    assert lhs == pytest.approx(rhs, rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(
    a=st.floats(min_value=-300e3, max_value=300e3),
    b=st.floats(min_value=0.0, max_value=300e3),
    w=st.floats(min_value=1.0, max_value=500e3),
)
def test_depth_bounded(a, b, w):
    fs = FictitiousSpin(0.0, TWO_PI * w, TWO_PI * a, TWO_PI * b)
    nf = nuclear_frequencies(fs)
    assert -1e-12 <= nf.k <= 1.0 + 1e-12


# ---------------------------------------------------------------------------
# kernels vs closed-form limits
# ---------------------------------------------------------------------------

def test_v2p_zero_delay_and_zero_depth():
    fs = make_fs(50e3, 30e3, 200e3)
    nf = nuclear_frequencies(fs)
    assert v2p_single(nf, 0.0) == pytest.approx(1.0)
    nf0 = nuclear_frequencies(make_fs(50e3, 0.0, 200e3))
    taus = np.linspace(0, 1e-4, 50)
    assert np.allclose(v2p_single(nf0, taus), 1.0)


def test_v3p_zero_depth():
    nf0 = nuclear_frequencies(make_fs(50e3, 0.0, 200e3))
    br = v3p_single(nf0, 5e-6, np.linspace(0, 1e-4, 7))
    assert np.allclose(br.up, 1.0) and np.allclose(br.dn, 1.0)


def test_v3p_blind_spot():
    fs = commensurate_fs(200e3, 100e3)
    nf = nuclear_frequencies(fs)
    tau_blind = 1.0 / 100e3            # full period of both frequencies
    ts = np.linspace(0, 2e-4, 101)
    br = v3p_single(nf, tau_blind, ts)
    v = product_combine(Branches3p(br.up, br.dn), "3p")
    assert np.max(np.abs(v - 1.0)) < 1e-10


def test_v5p_vanishing_transfer_sine():
    fs = commensurate_fs(200e3, 100e3)
    nf = nuclear_frequencies(fs)
    tau1 = 1.0 / 100e3                  # b_5p = 0: only the 2p baseline remains
    tau2 = 3.3e-6
    ts = np.linspace(0, 1e-4, 9)
    br = v5p_single(nf, tau1, tau2, ts)
    base = (v2p_single(nf, tau1) * v2p_single(nf, tau2)).ravel()
    for part in (br.up_plus, br.up_minus, br.dn_plus, br.dn_minus):
        assert np.allclose(part, base, atol=1e-12)


def test_v5p_zero_depth_combination_vanishes():
    # with k = 0 all four pathway products coincide, so the echo-selected
    # five-pulse combination cancels exactly (zero unmodulated baseline)
    nf0 = nuclear_frequencies(make_fs(50e3, 0.0, 200e3))
    br = v5p_single(nf0, 5e-6, 7e-6, np.linspace(0, 1e-4, 7))
    assert np.allclose(product_combine(br, "5p"), 0.0, atol=1e-12)


# ---------------------------------------------------------------------------
# oracle equivalence (density-matrix pathway propagation)
# ---------------------------------------------------------------------------

def test_v2p_matches_oracle_spec_point():
    fs = make_fs(50e3, 30e3, 200e3)
    nf = nuclear_frequencies(fs)
    tau = np.array([7.3e-6])
    kernel = v2p_single(nf, tau).ravel()
    oracle = oracle_trace("2p", [(TWO_PI * 50e3, TWO_PI * 30e3)], TWO_PI * 200e3, tau)
    assert abs(kernel[0] - oracle[0].real) < 1e-10
    assert abs(oracle[0].imag) < 1e-10


def test_v3p_matches_oracle_random(rng):
    for _ in range(3):
        a, b, w = rng.uniform(5e3, 80e3, 3)
        tau = rng.uniform(1e-6, 2e-5)
        ts = np.linspace(0.0, 8e-5, 13)
        nf = nuclear_frequencies(make_fs(a, b, w))
        kernel = product_combine(v3p_single(nf, tau, ts), "3p")
        oracle = oracle_trace("3p", [(TWO_PI * a, TWO_PI * b)], TWO_PI * w, ts, tau=tau)
        assert np.max(np.abs(oracle.real - kernel)) < 1e-9
        assert np.max(np.abs(oracle.imag)) < 1e-9


def test_v5p_matches_oracle_both_variants(rng):
    a, b, w = 42e3, 27e3, 110e3
    tau1, tau2 = 6.1e-6, 4.3e-6
    ts = np.linspace(0.0, 6e-5, 11)
    nf = nuclear_frequencies(make_fs(a, b, w))
    combo = product_combine(v5p_single(nf, tau1, tau2, ts), "5p")
    for variant in ("table", "printed"):
        oracle = oracle_trace(
            "5p", [(TWO_PI * a, TWO_PI * b)], TWO_PI * w, ts,
            tau1=tau1, tau2=tau2, variant=variant,
        )
        assert np.max(np.abs(oracle.real - combo)) < 1e-9
        assert np.max(np.abs(oracle.imag)) < 1e-9


def test_kernels_match_oracle_with_level_shifts(rng):
    # fictitious transitions with delta != 0 and |abar| != 1, signed omega_i
    for delta, abar in ((0.3, -0.62), (-0.18, 0.41)):
        tr = Transition(
            m=0, branch=0,
            m_s_alpha=(delta + abar) / 2, m_s_beta=(delta - abar) / 2,
            omega_s=0.0,
        )
        omega_i = -TWO_PI * 5.3e3
        a_zz, a_zx = TWO_PI * 7.1e3, TWO_PI * 3.9e3
        fs = fictitious_reduction(tr, a_zz, a_zx, omega_i)
        nf = nuclear_frequencies(fs)
        ts = np.linspace(0.0, 4e-4, 9)
        tau = 4.7e-5
        kernel = product_combine(v3p_single(nf, tau, ts), "3p")
        oracle = oracle_trace(
            "3p", [(a_zz, a_zx)], omega_i, ts, tau=tau, delta=delta, abar=abar
        )
        assert np.max(np.abs(oracle.real - kernel)) < 1e-9


def test_product_rule_two_spins_matches_oracle(rng):
    spins_hz = [(33e3, 21e3), (12e3, 9e3)]
    spins = [(TWO_PI * a, TWO_PI * b) for a, b in spins_hz]
    omega_i = TWO_PI * 90e3
    taus = np.linspace(0.0, 4e-5, 9)
    per_site = []
    for a, b in spins_hz:
        nf = nuclear_frequencies(make_fs(a, b, 90e3))
        per_site.append(v2p_single(nf, taus))
    combined = product_combine(np.array(per_site), "2p")
    oracle = oracle_trace("2p", spins, omega_i, taus)
    assert np.max(np.abs(oracle.real - combined)) < 1e-8


def test_dilute_linearization():
    p = 1e-3
    taus = np.linspace(0.0, 4e-5, 21)
    per_site = []
    for a, b in ((33e3, 21e3), (12e3, 9e3), (5e3, 4e3)):
        nf = nuclear_frequencies(make_fs(a, b, 90e3))
        per_site.append(v2p_single(nf, taus))
    per_site = np.array(per_site)
    product = product_combine(bernoulli_mean(per_site, p), "2p")
    linear = 1.0 - p * np.sum(1.0 - per_site, axis=0)
    assert np.max(np.abs(product - linear)) < (p * 3) ** 2


def test_empty_bath_values():
    assert product_combine(np.zeros((0, 5)), "2p") == pytest.approx(1.0)
    assert product_combine([], "3p") == pytest.approx(1.0)
    assert product_combine([], "5p") == pytest.approx(0.0)


@settings(max_examples=60, deadline=None)
@given(
    a=st.floats(min_value=-100e3, max_value=100e3),
    b=st.floats(min_value=0.0, max_value=100e3),
    w=st.floats(min_value=100.0, max_value=300e3),
    tau=st.floats(min_value=0.0, max_value=1e-4),
)
def test_branch_values_bounded(a, b, w, tau):
    nf = nuclear_frequencies(FictitiousSpin(0.0, TWO_PI * w, TWO_PI * a, TWO_PI * b))
    ts = np.linspace(0.0, 1e-4, 16)
    v2 = v2p_single(nf, ts)
    assert np.all(v2 <= 1.0 + 1e-9) and np.all(v2 >= -1.0 - 1e-9)
    br = v3p_single(nf, tau, ts)
    for part in (br.up, br.dn):
        assert np.all(part <= 1.0 + 1e-9) and np.all(part >= -1.0 - 1e-9)
    b5 = v5p_single(nf, tau, tau / 2 + 1e-6, ts)
    for part in (b5.up_plus, b5.up_minus, b5.dn_plus, b5.dn_minus):
        assert np.all(np.abs(part) <= 3.0 + 1e-9)


# ---------------------------------------------------------------------------
# weighted transition sum
# ---------------------------------------------------------------------------

def test_weighted_sum_identity():
    weights = transition_weights()
    per = {key: np.full(4, 0.73) for key in weights}
    out = weighted_transition_sum(per, weights)
    assert np.allclose(out, 0.73 * sum(weights.values()))
    assert abs(sum(weights.values()) - 1.0) <= 2e-3


def test_weight_table_anchors():
    weights = transition_weights()
    assert weights[(4, +1)] == pytest.approx(0.1075)
    assert weights[(-4, -1)] == pytest.approx(0.1075)
    for m in range(-4, 5):
        assert weights[(m, +1)] == pytest.approx(weights[(-m, -1)])


def test_weight_table_mismatch_rejected():
    weights = transition_weights()
    per = {key: 1.0 for key in list(weights)[:-1]}
    with pytest.raises(WeightTableError):
        weighted_transition_sum(per, weights)
    per = {key: 1.0 for key in weights}
    per[("bogus", 7)] = 1.0
    with pytest.raises(WeightTableError):
        weighted_transition_sum(per, weights)
