import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bqkd.adversary import EveStrategy
from bqkd.analysis import (
    INTERCEPT_RESEND_TABLE,
    csv_text,
    detection_closed_forms,
    detection_curve,
    exact_class_errors,
    gea_cases,
    gea_detection,
    gea_monte_carlo,
    kgr_bb84,
    kgr_bqkd,
    kgr_bsqkd,
    kgr_ratio_curve,
    kgr_sqkd07,
    shannon_entropy,
    summarize,
    two_way_cases,
    two_way_detection,
    within_sigma,
)
from bqkd.engine import RunConfig, run_protocol
from bqkd.errors import IndexOutOfRange, MissingAncillaMap, NotNormalized
from bqkd.qudit import copy_unitary, extract_ancilla_map, random_unitary
from bqkd.rules import B0, B1, B2, RoundClass

probs6 = st.lists(st.floats(0.001, 1.0), min_size=6, max_size=6).map(lambda v: [x / sum(v) for x in v])


@given(probs6, st.permutations(range(6)))
@settings(max_examples=50, deadline=None)
def test_entropy_is_permutation_invariant(p, perm):
    assert abs(shannon_entropy(p) - shannon_entropy([p[i] for i in perm])) < 1e-12


@given(probs6)
@settings(max_examples=50, deadline=None)
def test_entropy_is_bounded_by_uniform(p):
    assert 0 <= shannon_entropy(p) <= math.log2(6) + 1e-12


def test_entropy_edge_cases():
    assert shannon_entropy([1, 0, 0]) == 0.0
    assert shannon_entropy([0.5, 0.5]) == 1.0
    with pytest.raises(NotNormalized):
        shannon_entropy([0.5, 0.6])


def test_kgr_values():
    assert abs(kgr_bqkd(4).total - 10 / 9) < 1e-12
    assert abs(kgr_bqkd(6).total - 1.64) < 0.005
    assert abs(kgr_bqkd(8).total - 2.0) < 1e-12
    assert abs(kgr_bsqkd(4, 0.5) - 2 / 3) < 1e-12
    assert kgr_bb84(4) == 1.0
    assert kgr_sqkd07(2) == 0.25


@pytest.mark.parametrize("d", range(4, 34, 2))
def test_boosted_rate_beats_two_basis_baseline(d):
    assert kgr_bqkd(d).total - kgr_bb84(d) > 0


def test_kgr_breakdown_probabilities_sum_to_one():
    br = kgr_bqkd(10, (0.5, 0.25, 0.25))
    assert abs(sum(br.class_prob.values()) - 1) < 1e-12
    assert br.class_bits[RoundClass("B1", "B2")] == br.class_bits[RoundClass("B2", "B1")]


def test_ratio_curve_csv():
    rows = kgr_ratio_curve([4, 6, 8])
    assert abs(rows[0]["ratio"] - 1.1111) < 1e-4
    text = csv_text(rows, ("d", "kgr_bqkd", "kgr_bb84", "ratio"))
    assert text.splitlines()[0] == "d,kgr_bqkd,kgr_bb84,ratio"
    assert len(text.splitlines()) == 4


def test_simple_closed_forms():
    assert detection_closed_forms("subspace", l=3) == 0.875
    assert detection_closed_forms("intercept_resend", basis="B1", eve_basis="B2") == 0.75
    assert detection_closed_forms("intercept_resend", basis="B0", eve_basis="B0", l=4) == 0.0


def test_identity_and_copy_ancilla_maps():
    I = extract_ancilla_map(np.eye(16), 4, 4)
    C = extract_ancilla_map(copy_unitary(4), 4, 4)
    for ab, i, bb in gea_cases(4):
        assert gea_detection(I, ab, i, bb) == 0.0
        p = gea_detection(C, ab, i, bb)
        if ab is bb and ab is not B0:
            assert abs(p - 0.5) < 1e-12
        else:
            assert abs(p) < 1e-12
    for ab, i, meas in two_way_cases(4):
        assert two_way_detection(I, I, ab, i, meas) == 0.0


def test_closed_form_errors():
    with pytest.raises(MissingAncillaMap):
        detection_closed_forms("general", alice_basis=B0, alice_index=0, bob_basis=B0)
    with pytest.raises(MissingAncillaMap):
        detection_closed_forms("two_way", E=extract_ancilla_map(np.eye(16), 4, 4), alice_basis=B0,
                               alice_index=0, bob_measures=True)
    with pytest.raises(IndexOutOfRange):
        gea_detection(extract_ancilla_map(np.eye(16), 4, 4), B1, 7, B1)


def test_exact_errors_reproduce_intercept_resend_table():
    for eve_basis in ("B0", "B1", "B2"):
        errs = exact_class_errors(4, EveStrategy.intercept_resend([eve_basis]))
        for shared in ("B0", "B1", "B2"):
            expected = INTERCEPT_RESEND_TABLE[(shared, eve_basis)]
            assert abs(errs[RoundClass(shared, shared)] - expected) < 1e-12


def test_exact_errors_subspace():
    errs = exact_class_errors(4, EveStrategy.subspace([[0, 1], [2, 3]]))
    assert abs(errs.pop(RoundClass("B2", "B2")) - 0.5) < 1e-12
    assert all(v < 1e-12 for v in errs.values())


def test_gea_monte_carlo_agrees_for_one_unitary():
    U = random_unitary(16, np.random.default_rng(5))
    E = extract_ancilla_map(U, 4, 4)
    rng = np.random.default_rng(6)
    for ab, i, bb in gea_cases(4):
        errors, kept = gea_monte_carlo(U, 4, ab, i, bb, 20_000, rng)
        assert within_sigma(gea_detection(E, ab, i, bb), errors, kept, k=4)


def test_within_sigma_exact_cases():
    assert within_sigma(0.0, 0, 100)
    assert not within_sigma(0.0, 1, 100)
    assert not within_sigma(0.5, 0, 0)


def test_summarize_noiseless():
    cfg = RunConfig("bQKD", 6, 20_000, seed=4, check_fraction=0.01)
    rep = summarize(run_protocol(cfg), cfg)
    assert rep.keys_agree and not rep.abort
    assert abs(rep.empirical_kgr_with_check - rep.analytic_kgr) < 0.03
    assert "qber" in rep.qber_csv().splitlines()[0]
    assert rep.to_json()["key_length"] == rep.key_length


def test_summarize_reports_eve_guessing():
    cfg = RunConfig("bQKD", 4, 6000, seed=4, eve=EveStrategy.intercept_resend(["B1"]))
    rep = summarize(run_protocol(cfg), cfg)
    assert rep.abort
    assert rep.eve_guessed_rounds > 0 and 0 < rep.eve_correct_rate <= 1


def test_small_detection_curve():
    cfg = RunConfig("bQKD", 4, 12, alice_basis_probs=(0, 0, 1), bob_basis_probs=(0, 0, 1),
                    check_fraction=0.5, eve=EveStrategy.subspace([[0, 1], [2, 3]]))
    rows = detection_curve(cfg, RoundClass("B2", "B2"), 300, master_seed=1, l_max=3)
    assert [r["l"] for r in rows] == [1, 2, 3]
    for r in rows:
        sigma = math.sqrt(r["p_detect_analytic"] * (1 - r["p_detect_analytic"]) / 300)
        assert abs(r["p_detect_empirical"] - r["p_detect_analytic"]) < 4 * sigma


def test_entangling_closed_forms_are_calibrated():
    # Sum of squared z-scores over many independent cases is chi-square with
    # one degree of freedom per case; a wrong closed form inflates it badly.
    z2, n_cases = 0.0, 0
    for k in range(20):
        U = random_unitary(16, np.random.default_rng(500 + k))
        E = extract_ancilla_map(U, 4, 4)
        rng = np.random.default_rng(600 + k)
        for ab, i, bb in gea_cases(4):
            p = gea_detection(E, ab, i, bb)
            errors, kept = gea_monte_carlo(U, 4, ab, i, bb, 20_000, rng)
            z2 += (errors / kept - p) ** 2 / (p * (1 - p) / kept)
            n_cases += 1
    assert abs(z2 - n_cases) < 5 * math.sqrt(2 * n_cases)


def test_monte_carlo_rejects_a_wrong_map():
    U = random_unitary(16, np.random.default_rng(1))
    wrong = extract_ancilla_map(random_unitary(16, np.random.default_rng(2)), 4, 4)
    rng = np.random.default_rng(3)
    misses = 0
    for ab, i, bb in gea_cases(4):
        errors, kept = gea_monte_carlo(U, 4, ab, i, bb, 20_000, rng)
        misses += not within_sigma(gea_detection(wrong, ab, i, bb), errors, kept)
    assert misses > 20
