"""Point and interval scores, train/test ratios and the model-selection rule."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

METHODS = ("RF", "XGBOOST", "PROPHET", "ENSEMBLE")
CONVENTIONS = ("table", "text")
REPORT_COLUMNS = [
    "region",
    "method",
    "MSE",
    "MAE",
    "IS",
    "MSE_train",
    "MAE_train",
    "IS_train",
    "MSE_rel",
    "IS_rel",
    "MAE_rel",
    "selected",
    "relaxed",
]


def _pair(observed, predicted):
    obs = np.asarray(observed, dtype=float).ravel()
    pred = np.asarray(predicted, dtype=float).ravel()
    if len(obs) != len(pred):
        raise ValueError(f"length mismatch: {len(obs)} observed vs {len(pred)} predicted")
    if len(obs) == 0:
        raise ValueError("empty input")
    return obs, pred


def mse(observed, predicted) -> float:
    obs, pred = _pair(observed, predicted)
    return float(np.mean((obs - pred) ** 2))


def mae(observed, predicted) -> float:
    obs, pred = _pair(observed, predicted)
    return float(np.mean(np.abs(obs - pred)))


def rmse(observed, predicted) -> float:
    return float(np.sqrt(mse(observed, predicted)))


def interval_score(observed, lower, upper, alpha: float = 0.05) -> float:
    """Mean interval width plus excursion penalties.

    An observation strictly below ``lower`` adds ``2/(1-alpha) * (lower - obs)``;
    strictly above ``upper`` adds ``2/(1-alpha) * (obs - upper)``. The
    ``2/(1-alpha)`` weight follows the published definition of this study
    rather than the more common ``2/alpha``.
    """
    obs, lo = _pair(observed, lower)
    _, hi = _pair(observed, upper)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if np.any(lo > hi):
        bad = int(np.flatnonzero(lo > hi)[0])
        raise ValueError(f"crossed interval bounds at position {bad}: lower {lo[bad]} > upper {hi[bad]}")
    w = 2.0 / (1.0 - alpha)
    below = np.where(obs < lo, lo - obs, 0.0)
    above = np.where(obs > hi, obs - hi, 0.0)
    return float(np.mean((hi - lo) + w * below + w * above))


def ratio(train: float, test: float, convention: str = "table") -> float:
    """``100 * train / test`` ("table") or ``test / train`` ("text")."""
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")
    num, den = (100.0 * train, test) if convention == "table" else (test, train)
    if den == 0:
        raise ZeroDivisionError(f"zero denominator in relative ratio ({convention} convention)")
    return float(num / den)


def relative_ratios(train_scores: dict, test_scores: dict, convention: str = "table") -> dict:
    """Train-vs-test ratios for every score name present in both dicts.

    Keys are the score names with ``_rel`` appended, e.g. ``{"mse": ..}``
    gives ``{"mse_rel": ..}``.
    """
    out = {}
    for name in train_scores:
        if name in test_scores:
            out[f"{name}_rel"] = ratio(train_scores[name], test_scores[name], convention)
    return out


@dataclass(frozen=True)
class Selection:
    method: str
    relaxed: bool


def select_model(rows, threshold: float = 80.0) -> Selection:
    """Smallest test interval score among methods whose ``IS_rel`` exceeds
    ``threshold``; if none qualifies, smallest test IS overall with
    ``relaxed=True``. Ties go to the first row.

    ``rows`` is a DataFrame (or list of dicts) with ``method``, ``IS`` and
    ``IS_rel`` columns; ``IS_rel`` must use the table convention.
    """
    df = pd.DataFrame(rows).reset_index(drop=True)
    if df.empty:
        raise ValueError("no method rows to select from")
    ok = df[df["IS_rel"] > threshold]
    relaxed = ok.empty
    pool = df if relaxed else ok
    best = pool.loc[pool["IS"].idxmin()]
    if relaxed:
        log.warning("no method has IS_rel > %s; selecting smallest test IS overall", threshold)
    return Selection(str(best["method"]), bool(relaxed))


@dataclass
class EvaluationReport:
    """Per region x method scores, one row each, with the chosen method flagged."""

    table: pd.DataFrame
    convention: str = "table"

    def __post_init__(self):
        missing = [c for c in REPORT_COLUMNS if c not in self.table.columns]
        if missing:
            raise ValueError(f"report lacks columns {missing}")
        self.table = self.table[REPORT_COLUMNS].reset_index(drop=True)
        scores = self.table[["MSE", "MAE", "IS", "MSE_train", "MAE_train", "IS_train"]].to_numpy(float)
        if not (np.isfinite(scores).all() and (scores >= 0).all()):
            raise ValueError("scores must be finite and non-negative")
        picked = self.table.groupby("region", sort=False)["selected"].sum()
        if (picked != 1).any():
            raise ValueError(f"each region needs exactly one selected method: {picked.to_dict()}")

    def selected(self) -> dict:
        sel = self.table[self.table["selected"]]
        return dict(zip(sel["region"], sel["method"]))

    def to_csv(self, path=None, float_format="%.6f"):
        return self.table.to_csv(path, index=False, float_format=float_format)

    @classmethod
    def from_csv(cls, path, convention="table") -> "EvaluationReport":
        df = pd.read_csv(path)
        for col in ("selected", "relaxed"):
            df[col] = df[col].astype(bool)
        return cls(df, convention)


def score_method(obs_test, pred_test, obs_train, pred_train, alpha=0.05) -> dict:
    """MSE/MAE/IS on both periods. ``pred_*`` are ``(point, lower, upper)``."""
    p, lo, hi = pred_test
    tp, tlo, thi = pred_train
    return {
        "MSE": mse(obs_test, p),
        "MAE": mae(obs_test, p),
        "IS": interval_score(obs_test, lo, hi, alpha),
        "MSE_train": mse(obs_train, tp),
        "MAE_train": mae(obs_train, tp),
        "IS_train": interval_score(obs_train, tlo, thi, alpha),
    }


def build_report(scores: dict, convention: str = "table", threshold: float = 80.0) -> EvaluationReport:
    """``scores`` maps ``(region, method)`` to the dict from :func:`score_method`."""
    rows = []
    for (region, method), s in scores.items():
        row = {"region": region, "method": method, **s}
        row["MSE_rel"] = ratio(s["MSE_train"], s["MSE"], convention)
        row["IS_rel"] = ratio(s["IS_train"], s["IS"], convention)
        row["MAE_rel"] = ratio(s["MAE_train"], s["MAE"], convention)
        rows.append(row)
    df = pd.DataFrame(rows)
    df["selected"] = False
    df["relaxed"] = False
    for region, grp in df.groupby("region", sort=False):
        rel = grp if convention == "table" else grp.assign(IS_rel=100.0 / grp["IS_rel"])
        choice = select_model(rel, threshold)
        idx = grp.index[grp["method"] == choice.method][0]
        df.loc[idx, "selected"] = True
        df.loc[grp.index, "relaxed"] = choice.relaxed
    return EvaluationReport(df, convention)
