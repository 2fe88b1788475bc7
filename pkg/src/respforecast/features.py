"""Weekly climate-extremes indices and the regression design matrix."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import FeatureError
from .ingest import DailyClimatePanel, WeeklySeries
from .weeks import Week, format_week, parse_week

INDEX_NAMES = (
    "Tmax_max",
    "Tmax_mean",
    "Tmax_min",
    "n_Tmax_Q3",
    "Tmin_min",
    "Tmin_mean",
    "Tmin_max",
    "n_Tmin_Q1",
    "amplitude_max_max",
    "amplitude_max_mean",
    "amplitude_max_min",
    "amplitude_min_max",
    "amplitude_min_mean",
    "amplitude_min_min",
    "n_amplitude_Q3",
    "n_amplitude_P90",
    "precip_max_max",
    "precip_max_mean",
    "precip_max_min",
    "precip_mean_mean",
    "n_precip_max_Q3",
    "n_precip_max_P90",
)
COUNT_INDICES = tuple(n for n in INDEX_NAMES if n.startswith("n_"))
PRECIP_INDICES = tuple(n for n in INDEX_NAMES if "precip" in n)

THRESHOLD_COLUMNS = (
    "tmax_q75",
    "tmin_q25",
    "amplitude_q75",
    "amplitude_q25",
    "precip_max_q75",
    "precip_max_q90",
)
MIN_BASELINE_DAYS = 90


def feature_columns(aod_lag: int = 10) -> tuple[str, ...]:
    """Column order of every design matrix."""
    return INDEX_NAMES + ("aerosol", f"aerosol_{aod_lag}", "egreso_1", "egreso_2", "date")


@dataclass(frozen=True, eq=False)
class PercentileBaseline:
    """Per-cell exceedance thresholds.

    ``thresholds`` is indexed by ``cell_id`` with the columns of
    :data:`THRESHOLD_COLUMNS`.
    """

    thresholds: pd.DataFrame
    period: tuple[Week, Week] | None = None
    mode: str = "cell"

    def for_cells(self, cell_ids) -> np.ndarray:
        missing = [c for c in cell_ids if c not in self.thresholds.index]
        if missing:
            raise FeatureError(f"no baseline for cells {missing}")
        return self.thresholds.loc[list(cell_ids), list(THRESHOLD_COLUMNS)].to_numpy(float)


def _in_period(frame: pd.DataFrame, period) -> pd.DataFrame:
    if period is None:
        return frame
    iso = frame["date"].dt.isocalendar()
    key = iso["year"].astype(int) * 100 + iso["week"].astype(int)
    lo = period[0][0] * 100 + period[0][1]
    hi = period[1][0] * 100 + period[1][1]
    return frame[(key >= lo) & (key <= hi)]


def _quantiles(tmax, tmin, precip) -> list[float]:
    amp = tmax - tmin
    # numpy's default "linear" rule is h = (n - 1) p + 1
    return [
        np.quantile(tmax, 0.75),
        np.quantile(tmin, 0.25),
        np.quantile(amp, 0.75),
        np.quantile(amp, 0.25),
        np.quantile(precip, 0.75),
        np.quantile(precip, 0.90),
    ]


def compute_baseline(panel: DailyClimatePanel, period=None, mode: str = "cell") -> PercentileBaseline:
    """Empirical percentile thresholds over a baseline period.

    ``period`` is an inclusive ``(first_week, last_week)`` pair, or ``None``
    for the whole panel. With ``mode="region"`` the daily values of all
    cells in a region are pooled and every cell gets the regional threshold.
    """
    if mode not in ("cell", "region"):
        raise ValueError(f"unknown baseline mode {mode!r}")
    frame = _in_period(panel.records, period)
    rows = {}
    for cell_id, part in frame.groupby("cell_id", sort=True):
        if len(part) < MIN_BASELINE_DAYS:
            raise FeatureError(
                f"cell {cell_id}: {len(part)} days in the baseline period, need {MIN_BASELINE_DAYS}"
            )
    seen = set(frame["cell_id"].unique())
    short = sorted(set(panel.records["cell_id"].unique()) - seen)
    if short:
        raise FeatureError(f"cells {short} have no data in the baseline period")
    key = "cell_id" if mode == "cell" else "region_id"
    for k, part in frame.groupby(key, sort=True):
        q = _quantiles(
            part["tmax"].to_numpy(), part["tmin"].to_numpy(), part["precip"].to_numpy()
        )
        rows[k] = q
    if mode == "region":
        region_of = panel.cells.set_index("cell_id")["region_id"]
        rows = {c: rows[region_of[c]] for c in sorted(seen)}
    table = pd.DataFrame.from_dict(rows, orient="index", columns=list(THRESHOLD_COLUMNS))
    table.index.name = "cell_id"
    return PercentileBaseline(table, period, mode)


def _index_block(tmax, tmin, precip, thresholds) -> np.ndarray:
    """Indices for arrays of shape ``(cells, weeks, 7)``.

    ``thresholds`` has shape ``(cells, 6)`` in :data:`THRESHOLD_COLUMNS`
    order. Returns an array of shape ``(weeks, 22)``.
    """
    amp = tmax - tmin
    thr = thresholds[:, None, None, :]

    def triple(values, inner):
        # (max over cells of weekly max, mean of weekly means, min of weekly mins)
        # unless ``inner`` pins one within-week statistic for all three
        if inner is None:
            hi = values.max(axis=2).max(axis=0)
            lo = values.min(axis=2).min(axis=0)
            mid = values.mean(axis=2).mean(axis=0)
        else:
            weekly = inner(values, axis=2)
            hi, lo = weekly.max(axis=0), weekly.min(axis=0)
            mid = weekly.mean(axis=0)
        return hi, np.clip(mid, lo, hi), lo

    def count(mask):
        return mask.sum(axis=2).mean(axis=0)

    tx_max, tx_mean, tx_min = triple(tmax, None)
    tn_max, tn_mean, tn_min = triple(tmin, None)
    ax_max, ax_mean, ax_min = triple(amp, np.max)
    an_max, an_mean, an_min = triple(amp, np.min)
    px_max, px_mean, px_min = triple(precip, np.max)
    p_mean = precip.mean(axis=2).mean(axis=0)
    cols = [
        tx_max,
        tx_mean,
        tx_min,
        count(tmax > thr[..., 0]),
        tn_min,
        tn_mean,
        tn_max,
        count(tmin < thr[..., 1]),
        ax_max,
        ax_mean,
        ax_min,
        an_max,
        an_mean,
        an_min,
        count(amp > thr[..., 2]),
        count(amp < thr[..., 3]),
        px_max,
        px_mean,
        px_min,
        p_mean,
        count(precip > thr[..., 4]),
        count(precip > thr[..., 5]),
    ]
    return np.column_stack(cols)


def compute_indices(week_group: pd.DataFrame, baseline: PercentileBaseline) -> pd.Series:
    """The 22 indices for one region-week of daily records.

    Every cell in ``week_group`` must contribute exactly seven days.
    """
    cells = sorted(week_group["cell_id"].unique())
    arrays = {k: [] for k in ("tmax", "tmin", "precip")}
    for cell_id in cells:
        part = week_group[week_group["cell_id"] == cell_id].sort_values("date")
        if len(part) != 7 or part["date"].nunique() != 7:
            raise FeatureError(f"cell {cell_id} has {len(part)} days in the week, expected 7")
        for k in arrays:
            arrays[k].append(part[k].to_numpy(float))
    block = {k: np.array(v)[:, None, :] for k, v in arrays.items()}
    row = _index_block(block["tmax"], block["tmin"], block["precip"], baseline.for_cells(cells))
    return pd.Series(row[0], index=list(INDEX_NAMES))


def weekly_indices(panel: DailyClimatePanel, baseline: PercentileBaseline, region_id: str) -> pd.DataFrame:
    """Indices for every complete ISO week of one region.

    Returns a frame indexed by week tuples with :data:`INDEX_NAMES` columns.
    """
    frame = panel.region(region_id)
    if frame.empty:
        raise FeatureError(f"no climate records for region {region_id}")
    cells = sorted(frame["cell_id"].unique())
    days = pd.date_range(frame["date"].min(), frame["date"].max(), freq="D")
    # trim to whole Monday..Sunday weeks
    first = days[0] + pd.Timedelta(days=(7 - days[0].weekday()) % 7)
    last = days[-1] - pd.Timedelta(days=(days[-1].weekday() + 1) % 7)
    if last < first:
        return pd.DataFrame(columns=list(INDEX_NAMES), dtype=float)
    days = pd.date_range(first, last, freq="D")
    n_weeks = len(days) // 7
    stacked = {}
    for k in ("tmax", "tmin", "precip"):
        wide = frame.pivot(index="cell_id", columns="date", values=k).reindex(index=cells, columns=days)
        stacked[k] = wide.to_numpy(float).reshape(len(cells), n_weeks, 7)
    present = ~np.isnan(stacked["tmax"])
    any_day = present.any(axis=0)  # (weeks, 7)
    complete = any_day.all(axis=1)
    partial_cells = complete & ~present.all(axis=(0, 2))
    if partial_cells.any():
        w = int(np.argmax(partial_cells))
        missing = [cells[c] for c in range(len(cells)) if not present[c, w].all()]
        raise FeatureError(
            f"{region_id}: cells {missing} lack data in week "
            f"{format_week(tuple(days[7 * w].isocalendar()[:2]))}"
        )
    keep = np.flatnonzero(complete)
    block = {k: v[:, keep, :] for k, v in stacked.items()}
    values = _index_block(block["tmax"], block["tmin"], block["precip"], baseline.for_cells(cells))
    weeks = [tuple(days[7 * w].isocalendar()[:2]) for w in keep]
    return pd.DataFrame(values, index=pd.Index(weeks, tupleize_cols=False), columns=list(INDEX_NAMES))


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Design matrix of one region: one row per week, fixed column order."""

    region_id: str
    weeks: tuple[Week, ...]
    feature_names: tuple[str, ...]
    X: np.ndarray
    target: np.ndarray
    aod_lag: int = 10
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.target, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "weeks", tuple(tuple(w) for w in self.weeks))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if X.shape != (len(self.weeks), len(self.feature_names)) or y.shape != (len(self.weeks),):
            raise FeatureError(f"{self.region_id}: inconsistent matrix shapes")
        if np.isnan(X).any() or np.isnan(y).any():
            raise FeatureError(f"{self.region_id}: missing values in the design matrix")

    def __len__(self):
        return len(self.weeks)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_names.index(name)]

    def select(self, index) -> "FeatureMatrix":
        index = np.arange(len(self))[index]
        return FeatureMatrix(
            self.region_id,
            tuple(self.weeks[i] for i in index),
            self.feature_names,
            self.X[index],
            self.target[index],
            self.aod_lag,
        )

    def week_mask(self, first: Week, last: Week) -> np.ndarray:
        return np.array([first <= w <= last for w in self.weeks], dtype=bool)

    def with_columns(self, names, values) -> "FeatureMatrix":
        X = self.X.copy()
        for name, v in zip(names, values):
            X[:, self.feature_names.index(name)] = v
        return FeatureMatrix(self.region_id, self.weeks, self.feature_names, X, self.target, self.aod_lag)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.X, columns=list(self.feature_names))
        frame.insert(0, "week", [format_week(w) for w in self.weeks])
        frame.insert(0, "region_id", self.region_id)
        frame["target"] = self.target
        return frame

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        frame = pd.read_csv(Path(path), dtype={"region_id": str})
        names = [c for c in frame.columns if c not in ("region_id", "week", "target")]
        lag_cols = [c for c in names if c.startswith("aerosol_")]
        aod_lag = int(lag_cols[0].split("_")[1]) if lag_cols else 10
        return cls(
            str(frame["region_id"].iloc[0]),
            tuple(parse_week(w) for w in frame["week"]),
            tuple(names),
            frame[names].to_numpy(float),
            frame["target"].to_numpy(float),
            aod_lag,
        )


def log_transform_precip(matrix: FeatureMatrix) -> FeatureMatrix:
    """Replace every precipitation column by ``ln(1 + x)``."""
    cols = [i for i, n in enumerate(matrix.feature_names) if n in PRECIP_INDICES]
    X = matrix.X.copy()
    if (X[:, cols] < 0).any():
        raise FeatureError(f"{matrix.region_id}: negative precipitation index")
    X[:, cols] = np.log1p(X[:, cols])
    return FeatureMatrix(matrix.region_id, matrix.weeks, matrix.feature_names, X, matrix.target, matrix.aod_lag)


def sample_ccf(x, y, max_lag: int) -> list[tuple[int, float]]:
    """Pearson correlation of ``x[t - k]`` with ``y[t]`` for ``k = 0..max_lag``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if len(y) != n:
        raise FeatureError(f"series lengths differ ({n} vs {len(y)})")
    if max_lag < 0 or n <= max_lag + 2:
        raise FeatureError(f"need more than max_lag + 2 = {max_lag + 2} observations, got {n}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise FeatureError("correlation undefined for a constant series")
    out = []
    for k in range(max_lag + 1):
        a = x[: n - k]
        b = y[k:]
        if np.ptp(a) == 0 or np.ptp(b) == 0:
            raise FeatureError(f"correlation undefined at lag {k}: constant window")
        out.append((k, float(np.corrcoef(a, b)[0, 1])))
    return out


def select_lag(ccf) -> int:
    """Lag with the largest absolute correlation; ties go to the smaller lag."""
    best_lag, best = None, -1.0
    for lag, r in sorted(ccf):
        if abs(r) > best:
            best_lag, best = lag, abs(r)
    if best_lag is None:
        raise FeatureError("empty cross-correlation")
    return best_lag


def align_inputs(indices: pd.DataFrame, aod: WeeklySeries, hd: WeeklySeries):
    """Trim the three inputs to their common contiguous week range."""
    first = max(indices.index[0], aod.weeks[0], hd.weeks[0])
    last = min(indices.index[-1], aod.weeks[-1], hd.weeks[-1])
    if last < first:
        raise FeatureError(f"{hd.region_id}: climate, AOD and discharge weeks do not overlap")

    def cut(series: WeeklySeries):
        keep = [i for i, w in enumerate(series.weeks) if first <= w <= last]
        return WeeklySeries(series.region_id, [series.weeks[i] for i in keep], series.values[keep])

    mask = [first <= w <= last for w in indices.index]
    return indices[mask], cut(aod), cut(hd)


def build_design_matrix(
    indices: pd.DataFrame, aod: WeeklySeries, hd: WeeklySeries, aod_lag: int = 10
) -> FeatureMatrix:
    """Rows ``(X_t, AOD_t, AOD_{t-lag}, HD_{t-1}, HD_{t-2}, t) -> HD_t``.

    All three inputs must cover the same weeks. The first ``max(aod_lag, 2)``
    weeks have incomplete lags and are dropped; ``date`` counts weeks from
    the start of the aligned range.
    """
    weeks = tuple(indices.index)
    if weeks != aod.weeks or weeks != hd.weeks:
        raise FeatureError(f"{hd.region_id}: climate, AOD and discharge week ranges are misaligned")
    if aod_lag < 0:
        raise FeatureError("aod_lag must be non-negative")
    missing = [n for n in INDEX_NAMES if n not in indices.columns]
    if missing:
        raise FeatureError(f"missing index columns {missing}")
    n = len(weeks)
    start = max(aod_lag, 2)
    if n <= start:
        raise FeatureError(f"{hd.region_id}: {n} weeks is too short for lag {start}")
    t = np.arange(start, n)
    X = np.column_stack(
        [
            indices[list(INDEX_NAMES)].to_numpy(float)[t],
            aod.values[t],
            aod.values[t - aod_lag],
            hd.values[t - 1],
            hd.values[t - 2],
            t.astype(float),
        ]
    )
    return FeatureMatrix(
        hd.region_id,
        weeks[start:],
        feature_columns(aod_lag),
        X,
        hd.values[t],
        aod_lag,
    )
