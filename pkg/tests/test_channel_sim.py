from __future__ import annotations

import csv
import math
from fractions import Fraction

import numpy as np
import pytest

from pbrl import channel_sim as cs
from pbrl import rca
from pbrl.protograph import assemble


@pytest.fixture(scope="module")
def pn(short_codes):
    return short_codes["short_pnpbrl_z32"]


def test_noise_statistics():
    cfg = cs.ChannelConfig(1.0, Fraction(1, 2), seed=3)
    _, noise = cs.draw_frame(3, 0, 8, 1_000_000)
    y = 1.0 + cfg.sigma * noise
    assert np.var(y) == pytest.approx(cfg.sigma ** 2, rel=0.01)
    assert np.mean(cfg.llr(y)) == pytest.approx(2.0 / cfg.sigma ** 2, rel=0.02)
    assert cfg.sigma == pytest.approx(math.sqrt(1 / (2 * 0.5 * 10 ** 0.1)))


def test_frame_streams_are_counter_based():
    a = cs.draw_frame(5, 17, 10, 20)
    b = cs.draw_frame(5, 17, 10, 20)
    c = cs.draw_frame(5, 18, 10, 20)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[1], c[1])


def test_totals_do_not_depend_on_workers_or_batching(pn):
    code, plan = pn
    cfg = cs.ChannelConfig(2.0, cs.code_rate(code, plan, 1), seed=11)
    stop = cs.StopRule(min_frame_errors=10**6, max_frames=384)
    one = cs.run_point(code, plan, 1, cfg, stop)
    two = cs.run_point(code, plan, 1, cfg, stop, workers=2)
    small = cs.run_point(code, plan, 1, cfg, stop, batch_frames=64)
    assert one == two == small
    assert one.frames == 384 and 0 <= one.undetected <= one.frame_errors


def test_error_free_at_high_snr(pn):
    code, plan = pn
    cfg = cs.ChannelConfig(20.0, cs.code_rate(code, plan, 1))
    res = cs.run_point(code, plan, 1, cfg, cs.StopRule(1, 512))
    assert res.frame_errors == 0 and res.bit_errors == 0 and res.mean_iters <= 2


def test_fails_below_threshold(pn, families):
    code, plan = pn
    fam = families["short_pnpbrl"]
    th = rca.threshold(assemble(fam, 1), fam.punctured).ebn0_db
    cfg = cs.ChannelConfig(th - 1.0, cs.code_rate(code, plan, 1))
    res = cs.run_point(code, plan, 1, cfg, cs.StopRule(10**6, 256))
    assert res.fer > 0.3


def test_fer_falls_with_snr_under_common_random_numbers(pn):
    code, plan = pn
    points = cs.sweep(code, plan, [1], [1.0, 2.5, 4.0], cs.StopRule(10**6, 256), seed=2)
    errors = [p.frame_errors for p in points]
    assert errors == sorted(errors, reverse=True) and errors[0] > errors[-1]


def test_clopper_pearson():
    lo, hi = cs.clopper_pearson(0, 100)
    assert lo == 0.0 and hi == pytest.approx(1 - 0.025 ** (1 / 100), rel=1e-9)
    lo, hi = cs.clopper_pearson(10, 100)
    assert lo < 0.1 < hi and (lo, hi) == pytest.approx((0.0490, 0.1762), abs=1e-3)
    assert cs.clopper_pearson(5, 5)[1] == 1.0


def test_gap_report_examples():
    gaps = [cs.gap_report({"6/12": req}, {"1/2": 0.187})[0].gap_db for req in (0.83, 0.72, 0.187)]
    assert [round(g, 3) for g in gaps] == [0.643, 0.533, 0.0]
    rows = cs.gap_report({"1/2": 0.8, "3/4": 2.3}, {"1/2": 0.187, "3/4": 1.626})
    assert [r.rate for r in rows] == [Fraction(3, 4), Fraction(1, 2)]
    with pytest.raises(ValueError):
        cs.gap_report({"1/2": 0.8}, {"1/3": -0.5})


def test_required_ebn0_interpolates_log_linearly():
    def point(e, fer):
        return cs.PointResult(Fraction(1, 2), e, 5, 10**9, round(fer * 10**9), 0, 0, 0, 10, 0,
                              "flooding")
    pts = [point(1.0, 1e-3), point(2.0, 1e-7)]
    assert cs.required_ebn0(pts, 1e-5) == pytest.approx(1.5)
    assert math.isnan(cs.required_ebn0(pts, 1e-9))


def test_grid_and_csv(tmp_path):
    assert cs.parse_grid("0:0.5:2") == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert cs.parse_grid("1, 3") == [1.0, 3.0]
    assert cs.parse_grid("") == []
    with pytest.raises(ValueError):
        cs.parse_grid("0:-1:2")
    path = tmp_path / "empty.csv"
    cs.write_csv(path, [])
    assert path.read_text().strip() == ",".join(cs.CSV_COLUMNS)


def test_csv_row_fields(pn):
    code, plan = pn
    res = cs.run_point(code, plan, 0, cs.ChannelConfig(3.0, cs.code_rate(code, plan, 0)),
                       cs.StopRule(1, 256))
    assert res.rate == Fraction(6, 7)
    assert set(res.row()) == set(cs.CSV_COLUMNS)
