import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bqkd.cli import corrupted_rule
from bqkd.errors import IndexOutOfRange, UnsupportedDimension
from bqkd.golden import golden_rows, verify_rules
from bqkd.rules import (
    B0,
    B1,
    B2,
    DISCARD,
    Symbol,
    bsqkd_alice_symbol,
    bsqkd_symbol,
    check_unambiguity,
    cross_alphabet,
    pair_containing,
    pair_members,
    sift_symbol,
)


def test_spec_examples():
    assert sift_symbol(4, B0, 0, B1, 0) == (Symbol(0, 2), Symbol(0, 2))
    assert sift_symbol(4, B1, 2, B0, 3) == (Symbol(1, 2), Symbol(1, 2))
    assert sift_symbol(4, B1, 0, B2, 1) == (DISCARD, DISCARD)
    assert sift_symbol(4, B2, 3, B2, 3) == (Symbol(3, 4), Symbol(3, 4))


def test_d6_cross_examples():
    # sender pair {0,1}, receiver pair {1,2}: letter 0
    assert sift_symbol(6, B1, 0, B2, 0) == (Symbol(0, 2), Symbol(0, 2))
    # receiver's wrap-around pair {5,0} is always discarded
    assert sift_symbol(6, B1, 0, B2, 4) == (DISCARD, DISCARD)
    # odd sender pairs are discarded by the sender
    assert sift_symbol(6, B1, 2, B2, 2) == (DISCARD, DISCARD)
    assert sift_symbol(6, B1, 4, B2, 2) == (Symbol(1, 2), Symbol(1, 2))


@pytest.mark.parametrize("d", range(4, 34, 2))
def test_unambiguity_exhaustive(d):
    assert check_unambiguity(d) == []


def test_golden_tables_all_match():
    report = verify_rules(range(4, 14, 2))
    assert all(not v for v in report.values()), report
    tables = {row.table for d in (4, 6, 8, 10) for row in golden_rows(d)}
    assert {"table1", "table2", "table6a", "table6b", "table7a", "table7b"} <= tables


def test_planted_corruption_is_caught():
    report = verify_rules([4], corrupted_rule)
    assert report[4]
    assert any("expected 0" in str(f) for f in report[4])


@pytest.mark.parametrize("d", [8, 12, 16])
def test_cross_alphabet_d_multiple_of_four(d):
    assert cross_alphabet(d) == d // 4


@pytest.mark.parametrize("d", [6, 10, 14])
def test_cross_alphabet_d_two_mod_four(d):
    assert cross_alphabet(d) == (d + 2) // 4


@given(st.integers(2, 16).map(lambda n: 2 * n), st.data())
@settings(max_examples=40, deadline=None)
def test_pairs_partition_the_register(d, data):
    for basis in (B1, B2):
        covered = sorted(i for m in range(d // 2) for i in pair_members(d, basis, m))
        assert covered == list(range(d))
        i = data.draw(st.integers(0, d - 1))
        assert i in pair_members(d, basis, pair_containing(d, basis, i))


@given(st.integers(2, 10).map(lambda n: 2 * n), st.data())
@settings(max_examples=60, deadline=None)
def test_views_agree_or_both_discard(d, data):
    ab = data.draw(st.sampled_from([B0, B1, B2]))
    bb = data.draw(st.sampled_from([B0, B1, B2]))
    i = data.draw(st.integers(0, d - 1))
    k = data.draw(st.integers(0, d - 1))
    va, vb = sift_symbol(d, ab, i, bb, k)
    assert va.is_symbol == vb.is_symbol
    if va.is_symbol:
        assert va.alphabet == vb.alphabet
        assert 0 <= va.symbol < va.alphabet


def test_sift_errors():
    with pytest.raises(UnsupportedDimension):
        sift_symbol(5, B0, 0, B0, 0)
    with pytest.raises(IndexOutOfRange):
        sift_symbol(4, B0, 4, B0, 0)
    with pytest.raises(UnsupportedDimension):
        check_unambiguity(34)


def test_bsqkd_symbols():
    assert bsqkd_symbol(4, B0, 2, True, 2) == Symbol(2, 4)
    assert bsqkd_symbol(4, B1, 1, True, 1) == Symbol(0, 2)
    assert bsqkd_symbol(4, B2, 2, True, 0) == Symbol(1, 2)
    assert bsqkd_symbol(4, B2, 2, False, None) == DISCARD
    assert bsqkd_alice_symbol(4, B2, 2) == Symbol(1, 2)
