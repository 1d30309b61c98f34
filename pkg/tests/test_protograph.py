from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbrl.protograph import (PbrlFamily, ProtographError, Protomatrix, assemble,
                             family_from_protomatrix, rate_ladder, validate)


def test_toy_family_assembles_with_identity_block(families):
    fam = families["toy_r23"]
    full = assemble(fam, 7)
    assert full.shape == (9, 13)
    assert np.array_equal(full.mult[2:, 6:], np.eye(7, dtype=int))
    assert not full.mult[:2, 6:].any()
    assert fam.rate(0) == Fraction(2, 3)


def test_m_zero_is_precode(families):
    for fam in families.values():
        assert assemble(fam, 0) == fam.precode


def test_printed_short_family_shape_and_degree_one_columns(families):
    full = assemble(families["short_pbrl_printed"], 9)
    assert full.shape == (11, 17)
    assert np.all(full.variable_degrees()[8:] == 1)


def test_pn_ladder_rates(families):
    ladder = rate_ladder(families["short_pnpbrl"])
    assert [p.label() for p in ladder] == [f"6/{n}" for n in range(7, 19)]


def test_validation_census(families):
    long = validate(families["long_pnpbrl"])
    assert long.ok and long.parallel_lt_punctured == 2
    assert validate(families["short_pbrl_printed"]).parallel_lt == 0
    bad = PbrlFamily(Protomatrix([[1, 1, 1, 1], [1, 1, 1, 0]]), np.zeros((1, 4), int))
    report = validate(bad)
    assert not report.ok
    assert (3, 1) in report.low_degree and report.zero_lt_rows == [0]


def test_m_out_of_range(families):
    with pytest.raises(ProtographError):
        assemble(families["toy_r23"], 8)


def test_text_round_trip(families, tmp_path):
    for fam in families.values():
        fam.save(tmp_path / "f.pbrl")
        assert PbrlFamily.load(tmp_path / "f.pbrl") == fam
        assert family_from_protomatrix(assemble(fam, fam.num_lt), fam.r_precode, fam.punctured) == fam


def test_protomatrix_text_is_bit_exact():
    text = "2 3\n1 0 2\n0 4 1\n"
    assert Protomatrix.from_text(text).to_text() == text


@st.composite
def random_family(draw):
    r_p = draw(st.integers(1, 3))
    n_p = draw(st.integers(r_p + 1, 6))
    pre = draw(st.lists(st.lists(st.integers(0, 3), min_size=n_p, max_size=n_p),
                        min_size=r_p, max_size=r_p))
    pre = np.array(pre)
    pre[0][pre.sum(axis=0) == 0] = 1
    m = draw(st.integers(0, 5))
    lt = np.array(draw(st.lists(st.lists(st.integers(0, 2), min_size=n_p, max_size=n_p),
                                min_size=m, max_size=m)), dtype=int).reshape(m, n_p)
    punct = draw(st.sets(st.integers(0, n_p - 1), max_size=1))
    if n_p - len(punct) <= n_p - r_p:
        punct = set()
    return PbrlFamily(Protomatrix(pre), lt, frozenset(punct))


@settings(max_examples=60, deadline=None)
@given(random_family())
def test_nesting_and_rate_properties(fam):
    for m in range(fam.num_lt + 1):
        big = assemble(fam, m)
        assert np.array_equal(big.mult[:fam.r_precode, :fam.n_precode], fam.precode.mult)
        if m:
            assert np.all(big.variable_degrees()[fam.n_precode:] == 1)
            small = assemble(fam, m - 1)
            assert np.array_equal(big.mult[:small.rows, :small.cols], small.mult)
            assert fam.rate(m) < fam.rate(m - 1)
        cols, rows = big.cols, big.rows
        assert fam.rate(m) == Fraction(cols - rows, cols - len(fam.punctured))
