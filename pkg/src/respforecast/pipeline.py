"""Train/test split, sliding-window grid search, refits, ensemble and
split-conformal intervals."""

from __future__ import annotations

import itertools
import logging
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .additive import AdditiveParams, build_basis, fit_additive
from .errors import ComputationError, ConfigError, InputError
from .features import FeatureMatrix
from .metrics import rmse
from .trees import BoostParams, ForestParams, fit_gbt, fit_random_forest
from .weeks import Week, year_span

log = logging.getLogger(__name__)

LEARNERS = ("rf", "gbt", "additive")
METHOD_LABELS = {"rf": "RF", "gbt": "XGBOOST", "additive": "PROPHET", "ensemble": "ENSEMBLE"}
TIME_COLUMN = "date"
FINAL_FIT = 10_000  # window slot used to seed the full-train refit


@dataclass(frozen=True)
class SlidingWindow:
    analysis: tuple
    assessment: tuple
    analysis_idx: tuple[int, int] = (0, 0)
    assessment_idx: tuple[int, int] = (0, 0)

    def analysis_slice(self) -> slice:
        return slice(*self.analysis_idx)

    def assessment_slice(self) -> slice:
        return slice(*self.assessment_idx)


def make_windows(train_range, analysis_len: int = 104, assess_len: int = 52, step: int = 52) -> list[SlidingWindow]:
    """Annual sliding windows over ``train_range``.

    ``train_range`` is a length or a sequence of week labels. Windows start
    at offset 0 and advance by ``step`` while the assessment block fits.
    Index pairs are half-open positions into the range.
    """
    labels = list(range(train_range)) if isinstance(train_range, int) else list(train_range)
    n = len(labels)
    if min(analysis_len, assess_len, step) < 1:
        raise ValueError("window lengths and step must be positive")
    if n < analysis_len + assess_len:
        raise InputError(f"training range of {n} weeks is shorter than {analysis_len} + {assess_len}")
    out = []
    start = 0
    while start + analysis_len + assess_len <= n:
        a, b, c = start, start + analysis_len, start + analysis_len + assess_len
        out.append(SlidingWindow((labels[a], labels[b - 1]), (labels[b], labels[c - 1]), (a, b), (b, c)))
        start += step
    return out


@dataclass(frozen=True)
class Split:
    train: tuple[Week, Week]
    test: tuple[Week, Week]

    def __post_init__(self):
        for name, (a, b) in (("train", self.train), ("test", self.test)):
            if b < a:
                raise ConfigError(f"{name} range ends before it starts: {a} > {b}")
        if not self.train[1] < self.test[0]:
            raise ConfigError("training range must end before the test range starts")

    @classmethod
    def from_years(cls, train_first: int = 2001, train_last: int = 2018, test_first: int = 2019, test_last=None):
        return cls(year_span(train_first, train_last), year_span(test_first, test_last or test_first))

    def masks(self, matrix: FeatureMatrix):
        train = matrix.week_mask(*self.train)
        test = matrix.week_mask(*self.test)
        if not train.any() or not test.any():
            raise InputError(f"{matrix.region_id}: design matrix does not cover both train and test ranges")
        return train, test


@dataclass(frozen=True)
class HyperGrid:
    kind: str
    bundles: tuple

    def __post_init__(self):
        if self.kind not in LEARNERS:
            raise ConfigError(f"unknown learner {self.kind!r}")
        if not self.bundles:
            raise ConfigError(f"empty {self.kind} grid")
        object.__setattr__(self, "bundles", tuple(dict(b) for b in self.bundles))

    @classmethod
    def product(cls, kind, **axes):
        names = list(axes)
        return cls(kind, tuple(dict(zip(names, combo)) for combo in itertools.product(*axes.values())))


def default_grids(preset: str = "full") -> dict[str, HyperGrid]:
    """``full`` holds the published optima as grid members; ``quick`` is a
    small grid with fewer trees for smoke runs."""
    if preset == "full":
        return {
            "rf": HyperGrid.product("rf", mtry=[12, 15, 17, 20, 22, 25], min_n=[22, 30, 37, 40], n_trees=[1000]),
            "gbt": HyperGrid(
                "gbt",
                (
                    dict(mtry=12, min_n=40, tree_depth=13, learn_rate=0.007, loss_reduction=0.001, sample_size=0.898, n_trees=1000),
                    dict(mtry=14, min_n=8, tree_depth=11, learn_rate=0.078, loss_reduction=0.018, sample_size=0.828, n_trees=1000),
                    dict(mtry=10, min_n=35, tree_depth=12, learn_rate=0.003, loss_reduction=0.000, sample_size=0.589, n_trees=1000),
                ),
            ),
            "additive": HyperGrid.product(
                "additive",
                prior_scale_changepoints=[1.0, 1.778, 3.162],
                prior_scale_seasonality=[1.0, 1.778, 3.162, 5.623, 10.0],
            ),
        }
    if preset == "quick":
        return {
            "rf": HyperGrid.product("rf", mtry=[8, 17], min_n=[5, 20], n_trees=[100]),
            "gbt": HyperGrid.product(
                "gbt", mtry=[12], min_n=[5], tree_depth=[4], learn_rate=[0.1], sample_size=[0.8], n_trees=[100]
            ),
            "additive": HyperGrid.product("additive", prior_scale_changepoints=[1.0], prior_scale_seasonality=[1.0, 10.0]),
        }
    raise ConfigError(f"unknown grid preset {preset!r}")


def derive_seed(master: int, region: str, learner: str, window: int) -> int:
    """Independent 63-bit seed per (region, learner, window)."""
    code = LEARNERS.index(learner) if learner in LEARNERS else 99
    ss = np.random.SeedSequence([master & 0xFFFFFFFF, zlib.crc32(region.encode()), code, window])
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return ((int(hi) << 32) | int(lo)) & ((1 << 63) - 1)


class _Fitted:
    """Uniform predict interface over the three learners."""

    def __init__(self, kind, model, columns, names):
        self.kind = kind
        self.model = model
        self.columns = columns
        self.names = names

    def predict(self, X: np.ndarray) -> np.ndarray:
        """``X`` holds the full design-matrix columns in matrix order."""
        if self.kind == "additive":
            t = X[:, self.columns[0]]
            regs = X[:, self.columns[1:]]
            return self.model.predict(t, regs)
        return self.model.predict(X[:, self.columns])


def fit_learner(kind: str, X: np.ndarray, y: np.ndarray, names, bundle: dict, seed: int) -> _Fitted:
    """Fit one learner on raw design-matrix rows.

    Tree learners see every column, the week counter included. The additive
    model uses the week counter for trend and seasonality and the remaining
    columns, minus any constant on these rows, as regressors.
    """
    names = tuple(names)
    cols = list(range(len(names)))
    if kind == "rf":
        return _Fitted(kind, fit_random_forest(X, y, ForestParams(seed=seed, **bundle), names), cols, names)
    if kind == "gbt":
        return _Fitted(kind, fit_gbt(X, y, BoostParams(seed=seed, **bundle), names), cols, names)
    if kind == "additive":
        if TIME_COLUMN not in names:
            raise InputError(f"additive model needs a {TIME_COLUMN!r} column")
        ti = names.index(TIME_COLUMN)
        regs = [i for i, n in enumerate(names) if i != ti and np.ptp(X[:, i]) > 0]
        params = AdditiveParams(**bundle)
        basis = build_basis(X[:, ti], params, {names[i]: X[:, i] for i in regs})
        return _Fitted(kind, fit_additive(y, basis, params), [ti] + regs, names)
    raise ConfigError(f"unknown learner {kind!r}")


@dataclass
class GridResult:
    kind: str
    best_index: int
    best_bundle: dict
    mean_rmse: list
    failures: dict
    assessment_predictions: dict  # bundle index -> array over concatenated assessment rows


def grid_search(
    matrix: FeatureMatrix, kind: str, grid: HyperGrid, windows, master_seed: int = 0, rows=None
) -> GridResult:
    """Mean assessment RMSE of every bundle across ``windows``.

    ``rows`` restricts the matrix to the training rows the window indices
    refer to. A bundle that fails on any window is disqualified; ties go to
    the earlier bundle.
    """
    if not windows:
        raise InputError("no sliding windows")
    if grid.kind != kind:
        raise ConfigError(f"grid is for {grid.kind!r}, not {kind!r}")
    X = matrix.X if rows is None else matrix.X[rows]
    y = matrix.target if rows is None else matrix.target[rows]
    scores, failures, preds = [], {}, {}
    for b, bundle in enumerate(grid.bundles):
        per_window, pieces = [], []
        try:
            for w, win in enumerate(windows):
                a, s = win.analysis_slice(), win.assessment_slice()
                seed = derive_seed(master_seed, matrix.region_id, kind, w)
                model = fit_learner(kind, X[a], y[a], matrix.feature_names, bundle, seed)
                p = model.predict(X[s])
                if not np.isfinite(p).all():
                    raise ComputationError("non-finite assessment predictions")
                per_window.append(rmse(y[s], p))
                pieces.append(p)
        except (ComputationError, InputError, ValueError, np.linalg.LinAlgError) as exc:
            failures[b] = f"{type(exc).__name__}: {exc}"
            log.info("%s %s bundle %d disqualified: %s", matrix.region_id, kind, b, exc)
            scores.append(math.inf)
            continue
        scores.append(float(np.mean(per_window)))
        preds[b] = np.concatenate(pieces)
    finite = [s for s in scores if math.isfinite(s)]
    if not finite:
        raise ComputationError(f"{matrix.region_id}: every {kind} bundle failed: {failures}")
    best = int(np.argmin(scores))
    return GridResult(kind, best, dict(grid.bundles[best]), scores, failures, preds)


@dataclass(frozen=True, eq=False)
class ForecastSeries:
    weeks: tuple
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not (np.all(self.lower <= self.point) and np.all(self.point <= self.upper)):
            raise ComputationError("interval does not bracket the point forecast")


def conformal_quantile(calibration_residuals, alpha: float) -> float:
    """The ``ceil((n + 1)(1 - alpha))``-th smallest absolute residual, capped at ``n``."""
    scores = np.sort(np.abs(np.asarray(calibration_residuals, dtype=float)))
    n = len(scores)
    if n == 0:
        raise InputError("empty calibration set")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    k = min(max(math.ceil((n + 1) * (1 - alpha)), 1), n)
    return float(scores[k - 1])


def conformal_interval(point_forecasts, calibration_residuals, alpha: float = 0.05, weeks=None) -> ForecastSeries:
    q = conformal_quantile(calibration_residuals, alpha)
    point = np.asarray(point_forecasts, dtype=float)
    weeks = tuple(weeks) if weeks is not None else tuple(range(len(point)))
    return ForecastSeries(weeks, point, point - q, point + q, alpha)


def ensemble_predict(preds_rf, preds_gbt, preds_additive) -> np.ndarray:
    """Equal-weight mean; the three values are sorted first so the result
    does not depend on argument order, even in the last bit."""
    arrs = [np.asarray(p, dtype=float) for p in (preds_rf, preds_gbt, preds_additive)]
    if len({a.shape for a in arrs}) != 1:
        raise ValueError(f"length mismatch: {[a.shape for a in arrs]}")
    stacked = np.sort(np.stack(arrs), axis=0)
    return (stacked[0] + stacked[1] + stacked[2]) / 3.0


@dataclass
class MethodResult:
    method: str
    bundle: dict | None
    q: float
    test: ForecastSeries
    train: ForecastSeries
    model: object = None
    grid: GridResult | None = None


@dataclass
class ProtocolResult:
    region_id: str
    split: Split
    alpha: float
    train_weeks: tuple
    test_weeks: tuple
    y_train: np.ndarray
    y_test: np.ndarray
    methods: dict = field(default_factory=dict)  # label -> MethodResult


def run_protocol(
    matrix: FeatureMatrix, split: Split, grids: dict, alpha: float = 0.05, master_seed: int = 0, windows_kw=None
) -> ProtocolResult:
    """Tune, refit and conformalise every learner plus the ensemble for one region."""
    train, test = split.masks(matrix)
    tr_idx, te_idx = np.flatnonzero(train), np.flatnonzero(test)
    if tr_idx.max() >= te_idx.min():
        raise InputError("training rows must precede test rows")
    if np.any(np.diff(tr_idx) != 1):
        raise InputError(f"{matrix.region_id}: training rows are not contiguous")
    train_weeks = tuple(matrix.weeks[i] for i in tr_idx)
    test_weeks = tuple(matrix.weeks[i] for i in te_idx)
    windows = make_windows(train_weeks, **(windows_kw or {}))
    # leakage guard: every window lives inside the training range
    for w in windows:
        assert split.train[0] <= w.analysis[0] and w.assessment[1] <= split.train[1]
    assess_rows = np.concatenate([np.arange(*w.assessment_idx) for w in windows])
    y_assess = matrix.target[tr_idx][assess_rows]

    X_tr, y_tr = matrix.X[tr_idx], matrix.target[tr_idx]
    X_te, y_te = matrix.X[te_idx], matrix.target[te_idx]
    result = ProtocolResult(matrix.region_id, split, alpha, train_weeks, test_weeks, y_tr, y_te)
    assess, test_pts, train_pts = {}, {}, {}
    for kind in LEARNERS:
        grid = grids[kind]
        gr = grid_search(matrix, kind, grid, windows, master_seed, rows=tr_idx)
        resid = y_assess - gr.assessment_predictions[gr.best_index]
        q = conformal_quantile(resid, alpha)
        seed = derive_seed(master_seed, matrix.region_id, kind, FINAL_FIT)
        model = fit_learner(kind, X_tr, y_tr, matrix.feature_names, gr.best_bundle, seed)
        p_te, p_tr = model.predict(X_te), model.predict(X_tr)
        label = METHOD_LABELS[kind]
        result.methods[label] = MethodResult(
            label,
            gr.best_bundle,
            q,
            conformal_interval(p_te, resid, alpha, test_weeks),
            conformal_interval(p_tr, resid, alpha, train_weeks),
            model,
            gr,
        )
        assess[kind] = gr.assessment_predictions[gr.best_index]
        test_pts[kind], train_pts[kind] = p_te, p_tr
        log.info("%s %s best=%s rmse=%.3f q=%.3f", matrix.region_id, label, gr.best_bundle, gr.mean_rmse[gr.best_index], q)
    ens_resid = y_assess - ensemble_predict(*(assess[k] for k in LEARNERS))
    q = conformal_quantile(ens_resid, alpha)
    result.methods["ENSEMBLE"] = MethodResult(
        "ENSEMBLE",
        None,
        q,
        conformal_interval(ensemble_predict(*(test_pts[k] for k in LEARNERS)), ens_resid, alpha, test_weeks),
        conformal_interval(ensemble_predict(*(train_pts[k] for k in LEARNERS)), ens_resid, alpha, train_weeks),
    )
    return result
