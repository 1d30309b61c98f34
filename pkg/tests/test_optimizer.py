from __future__ import annotations

import random

import numpy as np
import pytest

from pbrl import rca
from pbrl.optimizer import (ExtensionPolicy, OptimizerError, _threshold_db, build_family,
                            candidate_rows, extend_once)
from pbrl.protograph import PbrlFamily, Protomatrix, assemble


@pytest.fixture(scope="module")
def short_precode(families):
    fam = families["short_pbrl_printed"]
    return PbrlFamily(fam.precode, np.zeros((0, 8), int), frozenset(), "short")


def test_all_ones_first_row_is_an_exhaustive_minimizer(short_precode):
    policy = ExtensionPolicy()
    rows = candidate_rows(short_precode, policy)
    assert len(rows) == 255
    thresholds = {r: _threshold_db(short_precode, r, policy) for r in rows}
    best = min(thresholds.values())
    assert thresholds[(1,) * 8] <= best + policy.precision_db
    new, record = extend_once(short_precode, policy)
    assert record.best_threshold_db == pytest.approx(best, abs=policy.precision_db)
    assert record.rate == "6/9"


def test_force_single_pins_punctured_column(families):
    fam = families["short_pnpbrl"].truncated(2)
    new, record = extend_once(fam, ExtensionPolicy(punct_rule="force-single"))
    assert record.best_row[0] == 1


def test_pinned_rules_need_a_punctured_node(short_precode):
    with pytest.raises(OptimizerError):
        extend_once(short_precode, ExtensionPolicy(punct_rule="force-single"))


def test_degenerate_precode_extends():
    fam = PbrlFamily(Protomatrix([[1, 1]]), np.zeros((0, 2), int))
    new, _ = extend_once(fam, ExtensionPolicy())
    assert assemble(new, 1).shape == (2, 3)


def test_zero_target_rows(short_precode):
    fam, trace = build_family(short_precode.precode, (), ExtensionPolicy(target_rows=0))
    assert fam.num_lt == 0 and not trace.steps


def test_determinism_nesting_and_thread_independence(short_precode):
    policy = ExtensionPolicy(target_rows=3)
    a, ta = build_family(short_precode.precode, (), policy)
    b, tb = build_family(short_precode.precode, (), policy)
    c, tc = build_family(short_precode.precode, (), ExtensionPolicy(target_rows=3, threads=2))
    assert a == b == c and ta.to_json() == tb.to_json() == tc.to_json()
    shorter, _ = build_family(short_precode.precode, (), ExtensionPolicy(target_rows=2))
    assert np.array_equal(a.lt_rows[:2], shorter.lt_rows)


def test_optimality_certificate(families):
    fam = families["short_pnpbrl"].truncated(3)
    policy = ExtensionPolicy(punct_rule="tiebreak-avoid", punct_max=2)
    new, record = extend_once(fam, policy)
    chosen = tuple(record.best_row)
    assert _threshold_db(fam, chosen, policy) == pytest.approx(record.best_threshold_db,
                                                               abs=policy.precision_db)
    rows = [r for r in candidate_rows(fam, policy) if r != chosen]
    for row in random.Random(0).sample(rows, 100):
        assert _threshold_db(fam, row, policy) >= record.best_threshold_db - policy.precision_db


def test_gap_grows_as_rate_drops(families):
    fam = families["short_pbrl"]
    gaps = {}
    for m in (0, 4):
        res = rca.threshold(assemble(fam, m))
        gaps[m] = res.ebn0_db - rca.shannon_limit_ebn0(res.rate)
    assert gaps[4] > gaps[0]


def test_per_row_schedule_reads_schedule():
    policy = ExtensionPolicy(punct_rule="per-row-schedule", schedule=(2, 2))
    assert policy.punctured_values(0) == (2,) and policy.punctured_values(5) == (1,)
    alt = ExtensionPolicy(punct_rule="force-alternating-pairs")
    assert [alt.punctured_values(i) for i in range(4)] == [(2,), (1,), (2,), (1,)]
