"""Shapley attributions: permutation-sampling estimator, brute-force exact
values, and aggregation into percentage importances."""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
import pandas as pd

from .errors import ComputationError

MAX_EXACT_FEATURES = 12
MAX_BACKGROUND = 256


@dataclass(frozen=True, eq=False)
class Attribution:
    instance: object
    phi: np.ndarray
    baseline: float
    prediction: float
    se: np.ndarray | None = None

    @property
    def efficiency_gap(self) -> float:
        return float(self.phi.sum() - (self.prediction - self.baseline))


def _as_rows(instance, background):
    x = np.asarray(instance, dtype=float).ravel()
    bg = np.asarray(background, dtype=float)
    if bg.ndim == 1:
        bg = bg[None, :]
    if len(bg) == 0:
        raise ValueError("empty background set")
    if bg.shape[1] != len(x):
        raise ValueError(f"background has {bg.shape[1]} columns, instance has {len(x)}")
    return x, bg


def _predict(fn, rows) -> np.ndarray:
    out = np.asarray(fn(rows), dtype=float).ravel()
    if len(out) != len(rows):
        raise ComputationError(f"predict returned {len(out)} values for {len(rows)} rows")
    return out


def shapley_sampling(predict, instance, background, n_samples: int = 64, seed=0, instance_id=None) -> Attribution:
    """Permutation estimator of Shapley values.

    Each draw takes a random feature order and a random background row
    ``z`` and walks from ``z`` to ``x`` one feature at a time, crediting each
    feature with the change in prediction. ``se`` is the Monte Carlo
    standard error of each ``phi``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    x, bg = _as_rows(instance, background)
    d = len(x)
    rng = np.random.default_rng(seed)
    perms = np.argsort(rng.random((n_samples, d)), axis=1)
    z_idx = rng.integers(0, len(bg), size=n_samples)

    # hybrid[m, k] = z with the first k features of perm m taken from x
    hybrid = np.repeat(bg[z_idx][:, None, :], d + 1, axis=1)
    for k in range(1, d + 1):
        cols = perms[:, :k]
        rows = np.arange(n_samples)[:, None]
        hybrid[rows, k, cols] = x[cols]
    f = _predict(predict, hybrid.reshape(-1, d)).reshape(n_samples, d + 1)
    steps = np.diff(f, axis=1)
    contrib = np.empty((n_samples, d))
    contrib[np.arange(n_samples)[:, None], perms] = steps
    phi = contrib.mean(axis=0)
    se = contrib.std(axis=0, ddof=1) / np.sqrt(n_samples) if n_samples > 1 else np.full(d, np.inf)
    baseline = float(_predict(predict, bg).mean())
    fx = float(_predict(predict, x[None, :])[0])
    return Attribution(instance_id, phi, baseline, fx, se)


def exact_shapley(predict, instance, background, instance_id=None) -> Attribution:
    """Exact Shapley values by enumerating all ``2^d`` coalitions, with
    absent features filled in from every background row and averaged."""
    x, bg = _as_rows(instance, background)
    d = len(x)
    if d > MAX_EXACT_FEATURES:
        raise ValueError(f"exact enumeration limited to {MAX_EXACT_FEATURES} features, got {d}")
    masks = ((np.arange(2**d)[:, None] >> np.arange(d)) & 1).astype(bool)
    rows = np.where(masks[:, None, :], x[None, None, :], bg[None, :, :])
    value = _predict(predict, rows.reshape(-1, d)).reshape(2**d, len(bg)).mean(axis=1)
    size = masks.sum(axis=1)
    weight = np.array([factorial(s) * factorial(d - s - 1) / factorial(d) if s < d else 0.0 for s in size])
    phi = np.zeros(d)
    ids = np.arange(2**d)
    for j in range(d):
        without = ids[~masks[:, j]]
        phi[j] = np.sum(weight[without] * (value[without | (1 << j)] - value[without]))
    return Attribution(instance_id, phi, float(value[0]), float(value[-1]))


@dataclass(frozen=True, eq=False)
class GlobalImportance:
    names: tuple[str, ...]
    percent: np.ndarray

    def as_series(self) -> pd.Series:
        return pd.Series(self.percent, index=list(self.names))

    def rendered(self, threshold: float = 1.0) -> pd.Series:
        """Percentages with entries below ``threshold`` blanked (NaN)."""
        s = self.as_series()
        return s.where(s >= threshold)


def global_importance(attributions, names=None) -> GlobalImportance:
    """Mean absolute attribution per feature, as percentages of the total."""
    phis = np.array([a.phi if isinstance(a, Attribution) else np.asarray(a, float) for a in attributions])
    if phis.ndim != 2 or len(phis) == 0:
        raise ValueError("need at least one attribution")
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(phis.shape[1]))
    if len(names) != phis.shape[1]:
        raise ValueError("names do not match attribution width")
    mean_abs = np.abs(phis).mean(axis=0)
    total = mean_abs.sum()
    if not total > 0:
        raise ComputationError("all attributions are zero; importance undefined")
    return GlobalImportance(names, 100.0 * mean_abs / total)


def background_sample(X, max_rows: int = MAX_BACKGROUND, seed=0) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if len(X) <= max_rows:
        return X
    idx = np.sort(np.random.default_rng(seed).choice(len(X), size=max_rows, replace=False))
    return X[idx]


def explain(predict, X_explain, X_background, names, n_samples: int = 64, seed=0, max_background=MAX_BACKGROUND):
    """Sampling attributions for every row of ``X_explain`` and their global
    importance. Each row gets its own child seed."""
    bg = background_sample(X_background, max_background, seed)
    children = np.random.SeedSequence(seed).spawn(len(X_explain))
    atts = [
        shapley_sampling(predict, row, bg, n_samples, np.random.default_rng(child), instance_id=i)
        for i, (row, child) in enumerate(zip(np.asarray(X_explain, float), children))
    ]
    return atts, global_importance(atts, names)


def importance_table(by_region: dict, threshold: float = 1.0) -> pd.DataFrame:
    """Covariate rows by region columns, blank below ``threshold``.

    Rows keep the feature order of the first region; covariates blank in
    every region are dropped.
    """
    if not by_region:
        raise ValueError("no regions")
    order = list(next(iter(by_region.values())).names)
    table = pd.DataFrame({r: gi.rendered(threshold).reindex(order) for r, gi in by_region.items()}, index=order)
    table = table.dropna(how="all")
    table.index.name = "covariate"
    return table
