"""Acceptance criteria, one test each. Every test records a PASS/FAIL line
that is printed in the terminal summary."""

import math
import os
import time

import numpy as np
import pandas as pd
import pytest

import conftest
import table2
from oracles import naive_panel_indices, random_panel
from respforecast.additive import AdditiveParams, build_basis, fit_additive
from respforecast.cli import main
from respforecast.features import COUNT_INDICES, INDEX_NAMES, weekly_indices
from respforecast.metrics import interval_score, ratio, select_model
from respforecast.pipeline import Split, conformal_interval, fit_learner
from respforecast.shapley import exact_shapley, shapley_sampling
from respforecast.trees import BoostParams, ForestParams, fit_gbt, fit_random_forest


def verdict(n, title, ok, detail=""):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    conftest.VERDICTS[n] = line
    print(line)
    assert ok, line


# --------------------------------------------------------------- 1
def test_criterion_1_index_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(20240101)
    bad = []
    for k in range(100):
        panel, base = random_panel(rng, max_cells=3, max_weeks=8)
        fast = weekly_indices(panel, base, "r")
        for w, ref in enumerate(naive_panel_indices(panel, base)):
            for name in INDEX_NAMES:
                got, want = float(fast.iloc[w][name]), ref[name]
                same = got == want if name in COUNT_INDICES else math.isclose(got, want, rel_tol=1e-12, abs_tol=0.0) or got == want
                if not same:
                    bad.append((k, w, name, got, want))
    elapsed = time.perf_counter() - start
    verdict(1, "22 indices equal a naive double loop on 100 panels", not bad and elapsed < 10, f"{len(bad)} mismatches, {elapsed:.1f}s")


# --------------------------------------------------------------- 2
def test_criterion_2_metric_formulas():
    inside = interval_score([7], [5], [10], 0.05)
    outside = interval_score([12], [5], [10], 0.05)
    ok_is = abs(inside - 5.0) <= 1e-9 and abs(outside - (5 + 2 / 0.95 * 2)) <= 1e-9 and abs(outside - 9.2105) < 5e-5
    df = table2.frame().set_index(["region", "method"])
    brunca = ratio(df.loc[("Brunca", "RF"), "IS_train"], df.loc[("Brunca", "RF"), "IS"], "table")
    norte = ratio(df.loc[("Central Norte", "RF"), "IS_train"], df.loc[("Central Norte", "RF"), "IS"], "table")
    ok_b, ok_n = abs(brunca - 83.69) <= 0.01, abs(norte - 80.79) <= 0.01
    detail = f"IS cases {inside:.10f}/{outside:.10f}; Brunca RF {brunca:.4f} vs 83.69; Central Norte RF {norte:.4f} vs 80.79"
    verdict(2, "interval score hand cases and published IS ratios", ok_is and ok_b and ok_n, detail)


# --------------------------------------------------------------- 3
def test_criterion_3_selection_rule():
    df = table2.frame()
    picked = {r: select_model(g).method for r, g in df.groupby("region", sort=False)}
    wrong = {r: (picked[r], table2.BOLD[r]) for r in table2.BOLD if picked[r] != table2.BOLD[r]}
    detail = "all seven match" if not wrong else "; ".join(f"{r}: rule gives {a}, bold is {b}" for r, (a, b) in wrong.items())
    verdict(3, "selection rule reproduces the bolded methods", not wrong, detail)


# --------------------------------------------------------------- 4
def test_criterion_4_conformal_coverage():
    start = time.perf_counter()
    bundle = dict(mtry=3, min_n=5, n_trees=25)
    names = [f"x{i}" for i in range(5)]
    hits = total = 0
    for rep in range(200):
        rng = np.random.default_rng([4, rep])
        n = 400
        X = rng.normal(size=(n, 5))
        y = 20 + 4 * X[:, 0] - 3 * X[:, 1] * X[:, 2] + rng.normal(0, 2, n)
        fit_rows, cal, test = slice(0, 200), slice(200, 300), slice(300, 400)
        model = fit_learner("rf", X[fit_rows], y[fit_rows], names, bundle, seed=rep)
        iv = conformal_interval(model.predict(X[test]), y[cal] - model.predict(X[cal]), 0.05)
        hits += int(np.sum((iv.lower <= y[test]) & (y[test] <= iv.upper)))
        total += 100
    coverage = hits / total
    elapsed = time.perf_counter() - start
    verdict(4, "95% conformal coverage over 200 replications", 0.90 <= coverage <= 0.99 and elapsed < 120, f"coverage {coverage:.4f}, {elapsed:.1f}s")


# --------------------------------------------------------------- shared full runs
@pytest.fixture(scope="module")
def full_runs(tmp_path_factory, synthetic_dir):
    base = tmp_path_factory.mktemp("full")
    jobs = str(min(4, os.cpu_count() or 1))
    times, codes = [], []
    for out in ("first", "second"):
        start = time.perf_counter()
        codes.append(main(["run", "--config", str(synthetic_dir / "run.cfg"), "--out", str(base / out), "--jobs", jobs]))
        times.append(time.perf_counter() - start)
    return base, codes, times


# --------------------------------------------------------------- 5
def test_criterion_5_learner_sanity(full_runs, synthetic_matrices):
    base, codes, _ = full_runs
    ev = pd.read_csv(base / "first" / "evaluation.csv")
    split = Split.from_years()
    lines, ok = [], codes[0] == 0
    for region, m in synthetic_matrices.items():
        train, test = split.masks(m)
        baseline = float(np.sqrt(np.mean((m.target[test] - m.target[train].mean()) ** 2)))
        for method in ("RF", "XGBOOST"):
            row = ev[(ev["region"] == region) & (ev["method"] == method)].iloc[0]
            gain = 1 - math.sqrt(row["MSE"]) / baseline
            ok &= gain >= 0.30
            lines.append(f"{region}/{method} {100 * gain:.0f}%")
    m = next(iter(synthetic_matrices.values()))
    train, _ = split.masks(m)
    model = fit_gbt(
        m.X[train],
        m.target[train],
        BoostParams(mtry=14, min_n=8, tree_depth=11, learn_rate=0.078, loss_reduction=0.0, sample_size=1.0, n_trees=1000, seed=1),
    )
    monotone = bool(np.all(np.diff(model.train_history) <= 0))
    detail = f"RMSE gains over mean baseline: {', '.join(lines)}; GBT training MSE non-increasing: {monotone}"
    verdict(5, "RF and GBT beat the mean baseline by 30%, boosting loss monotone", ok and monotone, detail)


# --------------------------------------------------------------- 6
def test_criterion_6_additive_recovery():
    t = np.arange(1, 521, dtype=float)
    p = AdditiveParams(n_changepoints=0, fourier_order=0)
    line = fit_additive(2 * t + 0.0, build_basis(t, p), p)
    ok_line = abs(line.trend_slope - 2) <= 1e-6 and abs(line.trend_intercept) <= 1e-6
    p = AdditiveParams(n_changepoints=0, fourier_order=1, prior_scale_seasonality=1e8)
    wave = fit_additive(np.sin(2 * np.pi * t / p.period_weeks), build_basis(t, p), p)
    sin_c, cos_c = wave.coefficients("seasonal")
    ok_wave = abs(sin_c - 1) <= 1e-3 and abs(cos_c) <= 1e-3
    rng = np.random.default_rng(6)
    reg = {"a": rng.normal(size=520), "b": rng.normal(size=520)}
    y = 100 + 0.05 * t + 15 * np.sin(2 * np.pi * t / 52.18) + np.where(t > 300, 0.3 * (t - 300), 0) + 4 * reg["a"] + rng.normal(0, 3, 520)
    worst = -np.inf
    for cp in (0.05, 1.0, 3.162, 100.0):
        p = AdditiveParams(prior_scale_changepoints=cp, prior_scale_seasonality=3.162)
        h = fit_additive(y, build_basis(t, p, reg), p).objective_history
        worst = max(worst, float(np.max(np.diff(h))) if len(h) > 1 else -np.inf)
    ok_obj = worst <= 0
    detail = f"slope {line.trend_slope:.10f}, intercept {line.trend_intercept:.2e}, sin {sin_c:.6f}, cos {cos_c:.2e}, largest sweep change {worst:.3e}"
    verdict(6, "additive trend/seasonality recovery, monotone objective", ok_line and ok_wave and ok_obj, detail)


# --------------------------------------------------------------- 7
def test_criterion_7_shapley():
    rng = np.random.default_rng(0)
    w = rng.normal(size=6)
    bg = rng.normal(size=(40, 6))
    x = rng.normal(size=6)
    lin = exact_shapley(lambda X: X @ w + 1.5, x, bg)
    ok_closed = np.max(np.abs(lin.phi - w * (x - bg.mean(axis=0)))) <= 1e-10
    outside, checks, worst_eff, eff_ok = 0, 0, 0.0, True
    for k in range(20):
        X = rng.normal(size=(150, 6))
        y = X[:, 0] * X[:, 1] + np.sin(2 * X[:, 2]) + 0.5 * X[:, 3] + 0.1 * rng.normal(size=150)
        model = fit_random_forest(X, y, ForestParams(mtry=3, min_n=3, n_trees=10, seed=k))
        background, inst = X[:50], X[100 + k]
        ex = exact_shapley(model.predict, inst, background)
        mc = shapley_sampling(model.predict, inst, background, n_samples=2000, seed=k)
        outside += int(np.sum(np.abs(mc.phi - ex.phi) > 3 * mc.se))
        checks += 6
        eff_ok &= abs(ex.efficiency_gap) <= 1e-10
        eff_ok &= abs(mc.efficiency_gap) <= 3 * np.sqrt(np.sum(mc.se**2))
        worst_eff = max(worst_eff, abs(ex.efficiency_gap))
    ok = ok_closed and outside == 0 and eff_ok
    detail = f"closed-form error {np.max(np.abs(lin.phi - w * (x - bg.mean(axis=0)))):.1e}; {outside}/{checks} sampled values beyond 3 SE; exact efficiency gap {worst_eff:.1e}"
    verdict(7, "exact and sampled Shapley values, efficiency", ok, detail)


# --------------------------------------------------------------- 8
def test_criterion_8_lag_discovery(synthetic_dir, tmp_path):
    code = main(["ccf", "--config", str(synthetic_dir / "run.cfg"), "--covariate", "aerosol", "--out", str(tmp_path)])
    summary = pd.read_csv(tmp_path / "ccf_aerosol_summary.csv")
    found = int((summary["best_lag"] == 10).sum())
    verdict(8, "ccf recovers the injected AOD lag", code == 0 and found >= 6, f"lag 10 in {found}/{len(summary)} regions")


# --------------------------------------------------------------- 9
def test_criterion_9_determinism(full_runs):
    base, codes, times = full_runs
    first = sorted(p.relative_to(base / "first") for p in (base / "first").rglob("*") if p.is_file())
    second = sorted(p.relative_to(base / "second") for p in (base / "second").rglob("*") if p.is_file())
    same = first == second and all((base / "first" / f).read_bytes() == (base / "second" / f).read_bytes() for f in first)
    ok = codes == [0, 0] and same and len(first) >= 11 and times[0] < 900
    detail = f"{len(first)} artifacts, identical={same}, run times {times[0]:.0f}s/{times[1]:.0f}s on {os.cpu_count()} core(s)"
    verdict(9, "two full runs give byte-identical artifacts within 15 minutes", ok, detail)
