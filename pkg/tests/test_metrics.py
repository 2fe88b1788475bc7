import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import table2
from respforecast.metrics import (
    EvaluationReport,
    build_report,
    interval_score,
    mae,
    mse,
    ratio,
    relative_ratios,
    score_method,
    select_model,
)

finite = st.floats(-1e4, 1e4, allow_nan=False)


def test_point_scores_hand_cases():
    assert mse([1, 4], [1, 2]) == 2.0
    assert mae([1, 4], [1, 2]) == 1.0
    assert mse([3, 5], [3, 5]) == 0 and mae([3, 5], [3, 5]) == 0


def test_point_score_errors():
    with pytest.raises(ValueError, match="length"):
        mse([1, 2], [1])
    with pytest.raises(ValueError, match="empty"):
        mae([], [])


def test_interval_score_hand_cases():
    assert interval_score([7], [5], [10], 0.05) == pytest.approx(5.0, abs=1e-9)
    assert interval_score([12], [5], [10], 0.05) == pytest.approx(5 + (2 / 0.95) * 2, abs=1e-9)
    assert interval_score([12], [5], [10], 0.05) == pytest.approx(9.2105, abs=1e-4)
    assert interval_score([5], [5], [10], 0.05) == 5.0
    assert interval_score([2], [5], [10], 0.05) == pytest.approx(5 + (2 / 0.95) * 3)


def test_interval_score_crossed_bounds():
    with pytest.raises(ValueError, match="crossed"):
        interval_score([1, 2], [0, 3], [1, 2.5])


@settings(max_examples=60)
@given(arrays(float, 8, elements=finite), arrays(float, 8, elements=finite), arrays(float, 8, elements=finite))
def test_mae_below_root_mse(a, b, c):
    assert mae(a, b) <= math.sqrt(mse(a, b)) * (1 + 1e-12) + 1e-12
    assert mse(2 * a, 2 * b) == pytest.approx(4 * mse(a, b), rel=1e-9, abs=1e-6)


@settings(max_examples=60)
@given(arrays(float, 6, elements=finite), arrays(float, 6, elements=st.floats(0, 100)), finite, st.floats(0.01, 0.99))
def test_interval_score_properties(obs, width, shift, alpha):
    lo = obs - width / 2 - 1.0
    hi = obs + width / 2
    # all inside: mean width
    assert interval_score(obs, lo, hi, alpha) == pytest.approx(np.mean(hi - lo), rel=1e-9)
    lo2, hi2 = obs + 1.0, obs + 1.0 + width
    s = interval_score(obs, lo2, hi2, alpha)
    assert s == pytest.approx(interval_score(obs + shift, lo2 + shift, hi2 + shift, alpha), rel=1e-6, abs=1e-6)
    assert s >= np.mean(hi2 - lo2)


def test_relative_ratio_conventions():
    assert ratio(5, 5, "table") == 100 and ratio(5, 5, "text") == 1
    r = relative_ratios({"is": 60.09, "mse": 73.1}, {"is": 71.79, "mse": 188.55}, "table")
    assert r["is_rel"] == pytest.approx(100 * 60.09 / 71.79)
    assert ratio(56.27, 69.65) == pytest.approx(80.79, abs=0.01)
    assert relative_ratios({"is": 2.0}, {"is": 3.0}, "text") == {"is_rel": 1.5}
    with pytest.raises(ZeroDivisionError):
        ratio(1, 0)
    with pytest.raises(ValueError):
        ratio(1, 1, "other")


def test_published_is_ratios_follow_table_convention():
    # every printed IS_rel sits within rounding of 100 * train / test
    df = table2.frame()
    recomputed = 100 * df["IS_train"] / df["IS"]
    assert np.all(np.abs(recomputed - df["IS_rel"]) < 0.05)


def test_published_mse_rel_is_a_mae_ratio():
    df = table2.frame()
    mae_ratio = 100 * df["MAE_train"] / df["MAE"]
    mse_ratio = 100 * df["MSE_train"] / df["MSE"]
    assert np.median(np.abs(mae_ratio - df["MSE_rel"])) < 0.1
    assert np.median(np.abs(mse_ratio - df["MSE_rel"])) > 5


def test_select_model_simple_cases():
    rows = [
        {"method": "RF", "IS": 10.0, "IS_rel": 85.0},
        {"method": "XGBOOST", "IS": 9.0, "IS_rel": 70.0},
    ]
    assert select_model(rows) == select_model(pd.DataFrame(rows))
    assert select_model(rows).method == "RF" and not select_model(rows).relaxed
    low = [dict(r, IS_rel=50.0) for r in rows]
    s = select_model(low)
    assert s.method == "XGBOOST" and s.relaxed
    tie = [{"method": "A", "IS": 1.0, "IS_rel": 90.0}, {"method": "B", "IS": 1.0, "IS_rel": 90.0}]
    assert select_model(tie).method == "A"


def test_select_model_published_brunca():
    df = table2.frame()
    assert select_model(df[df["region"] == "Brunca"]).method == "PROPHET"


def scores_for(rng):
    obs_te, obs_tr = rng.normal(100, 10, 52), rng.normal(100, 10, 200)
    def pred(obs, q):
        p = obs + rng.normal(0, 5, len(obs))
        return p, p - q, p + q
    return score_method(obs_te, pred(obs_te, 8), obs_tr, pred(obs_tr, 8))


def test_report_roundtrip_and_single_selection(tmp_path):
    rng = np.random.default_rng(0)
    scores = {(r, m): scores_for(rng) for r in ("a", "b") for m in ("RF", "XGBOOST", "PROPHET", "ENSEMBLE")}
    rep = build_report(scores)
    assert rep.table.groupby("region")["selected"].sum().tolist() == [1, 1]
    rep.to_csv(tmp_path / "e.csv")
    back = EvaluationReport.from_csv(tmp_path / "e.csv")
    assert back.selected() == rep.selected()
    pd.testing.assert_frame_equal(back.table, rep.table, check_exact=False, rtol=1e-6)


def test_text_convention_selects_like_table():
    rng = np.random.default_rng(1)
    scores = {("a", m): scores_for(rng) for m in ("RF", "XGBOOST", "PROPHET", "ENSEMBLE")}
    t, x = build_report(scores, "table"), build_report(scores, "text")
    assert t.selected() == x.selected()
    assert np.allclose(t.table["IS_rel"] * x.table["IS_rel"], 100)


def test_report_rejects_bad_rows():
    rng = np.random.default_rng(2)
    rep = build_report({("a", "RF"): scores_for(rng), ("a", "PROPHET"): scores_for(rng)})
    table = rep.table.copy()
    table["selected"] = True
    with pytest.raises(ValueError, match="exactly one"):
        EvaluationReport(table)
