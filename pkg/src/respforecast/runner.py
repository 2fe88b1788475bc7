"""End-to-end run: per-region protocol, scoring, attribution, artifacts."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import report
from .config import RunConfig
from .dataset import load_inputs, region_matrix
from .features import FeatureMatrix
from .metrics import EvaluationReport, build_report, score_method
from .pipeline import LEARNERS, METHOD_LABELS, Split, default_grids, derive_seed, ensemble_predict, run_protocol
from .shapley import explain, importance_table

log = logging.getLogger(__name__)


@dataclass
class RegionOutcome:
    region: str
    scores: dict  # method -> score dict
    forecasts: list
    bundles: dict  # method -> params
    selected: str
    relaxed: bool
    plot: pd.DataFrame
    importance: object


def _predictor(result, method):
    if method != "ENSEMBLE":
        return result.methods[method].model.predict
    models = [result.methods[METHOD_LABELS[k]].model for k in LEARNERS]
    return lambda X: ensemble_predict(*(m.predict(X) for m in models))


def process_region(matrix: FeatureMatrix, cfg: RunConfig) -> RegionOutcome:
    split = Split.from_years(cfg.train_years[0], cfg.train_years[1], cfg.test_years[0], cfg.test_years[1])
    result = run_protocol(matrix, split, default_grids(cfg.grid), cfg.alpha, cfg.seed)
    scores = {}
    for label, m in result.methods.items():
        scores[label] = score_method(
            result.y_test,
            (m.test.point, m.test.lower, m.test.upper),
            result.y_train,
            (m.train.point, m.train.lower, m.train.upper),
            cfg.alpha,
        )
    rep = build_report({(matrix.region_id, k): v for k, v in scores.items()}, cfg.convention)
    row = rep.table[rep.table["selected"]].iloc[0]
    selected = row["method"]

    train, test = split.masks(matrix)
    seed = derive_seed(cfg.seed, matrix.region_id, "shapley", 0)
    _, importance = explain(
        _predictor(result, selected),
        matrix.X[test],
        matrix.X[train],
        matrix.feature_names,
        n_samples=cfg.shapley_samples,
        seed=seed,
    )
    bundles = {label: dict(m.bundle) for label, m in result.methods.items() if m.bundle is not None}
    return RegionOutcome(
        matrix.region_id,
        scores,
        report.forecast_rows(matrix.region_id, result),
        bundles,
        selected,
        bool(row["relaxed"]),
        report.plot_frame(result, selected),
        importance,
    )


def _job(args):
    return process_region(*args)


def build_matrices(cfg: RunConfig) -> dict:
    inputs = load_inputs(cfg)
    regions = list(cfg.regions) or inputs.regions
    return {r: region_matrix(inputs, r, cfg.aod_lag) for r in regions}


def run(cfg: RunConfig, jobs: int = 1, svg: bool = False) -> dict:
    """Execute the whole protocol and write every artifact under ``cfg.output``.

    Returns the written paths keyed by artifact name.
    """
    matrices = build_matrices(cfg)
    work = [(matrices[r], cfg) for r in matrices]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_job, work))
    else:
        outcomes = [_job(w) for w in work]
    return write_artifacts(outcomes, cfg, svg)


def write_artifacts(outcomes, cfg: RunConfig, svg: bool = False) -> dict:
    out = Path(cfg.output)
    paths = {}
    forecasts = pd.DataFrame([row for o in outcomes for row in o.forecasts], columns=report.FORECAST_COLUMNS)
    paths["forecasts"] = out / "forecasts.csv"
    report.write_csv(forecasts, paths["forecasts"])

    scores = {(o.region, m): s for o in outcomes for m, s in o.scores.items()}
    rep = build_report(scores, cfg.convention)
    paths["evaluation"] = out / "evaluation.csv"
    report.write_atomic(paths["evaluation"], rep.to_csv(float_format=report.FLOAT_FORMAT))

    table = importance_table({o.region: o.importance for o in outcomes}, cfg.importance_threshold)
    paths["importance"] = out / "importance.csv"
    report.write_csv(table, paths["importance"], index=True)

    paths["hyperparameters"] = out / "hyperparameters.json"
    report.write_json(report.hyperparameter_layout({o.region: o.bundles for o in outcomes}), paths["hyperparameters"])

    for o in outcomes:
        p = out / "plots" / f"{o.region}.csv"
        report.write_csv(o.plot, p)
        paths[f"plot:{o.region}"] = p
        if svg:
            s = out / "plots" / f"{o.region}.svg"
            report.render_svg(o.plot, f"{o.region} ({o.selected})", s)
            paths[f"svg:{o.region}"] = s
    return paths


def load_evaluation(path) -> EvaluationReport:
    return EvaluationReport.from_csv(path)


def baseline_rmse(y_train, y_test) -> float:
    return float(np.sqrt(np.mean((np.asarray(y_test) - np.mean(y_train)) ** 2)))
