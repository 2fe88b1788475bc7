"""Loaders for the raw CSV inputs and region-level aggregation.

Inputs are plain UTF-8 CSV files with a header row:

* climate: ``cell_id, date, tmax, tmin, precip``
* cell map: ``cell_id, lat, lon, region_id``
* AOD sites: ``site_id, lat, lon``
* AOD daily: ``site_id, date, aod`` (empty ``aod`` marks a missing retrieval)
* centroids: ``region_id, lat, lon``
* discharges: ``region_id, iso_year, iso_week, count``
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import IngestError
from .weeks import Week, format_week, next_week, week_of

logger = logging.getLogger(__name__)

CLIMATE_COLUMNS = ("cell_id", "date", "tmax", "tmin", "precip")
CELL_MAP_COLUMNS = ("cell_id", "lat", "lon", "region_id")
SITE_COLUMNS = ("site_id", "lat", "lon")
AOD_COLUMNS = ("site_id", "date", "aod")
CENTROID_COLUMNS = ("region_id", "lat", "lon")
DISCHARGE_COLUMNS = ("region_id", "iso_year", "iso_week", "count")


@dataclass(frozen=True)
class GridCell:
    cell_id: str
    lat: float
    lon: float
    region_id: str


@dataclass(frozen=True)
class AodSite:
    site_id: str
    lat: float
    lon: float


@dataclass(frozen=True)
class RegionCentroid:
    region_id: str
    lat: float
    lon: float


@dataclass(frozen=True, eq=False)
class WeeklySeries:
    """A contiguous run of ISO weeks with one value per week."""

    region_id: str
    weeks: tuple[Week, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "weeks", tuple(tuple(w) for w in self.weeks))
        object.__setattr__(self, "values", values)
        if len(self.weeks) != len(values):
            raise IngestError(f"{self.region_id}: {len(self.weeks)} weeks but {len(values)} values")
        for prev, cur in zip(self.weeks, self.weeks[1:]):
            if cur <= prev:
                raise IngestError(
                    f"{self.region_id}: weeks not strictly increasing at {format_week(cur)}"
                )
            expected = next_week(prev)
            if cur != expected:
                raise IngestError(
                    f"{self.region_id}: missing week {format_week(expected)} "
                    f"(series jumps from {format_week(prev)} to {format_week(cur)})"
                )

    def __len__(self):
        return len(self.weeks)

    def __eq__(self, other):
        if not isinstance(other, WeeklySeries):
            return NotImplemented
        return (
            self.region_id == other.region_id
            and self.weeks == other.weeks
            and np.array_equal(self.values, other.values)
        )

    def to_series(self) -> pd.Series:
        return pd.Series(self.values, index=pd.Index(self.weeks, tupleize_cols=False), name=self.region_id)


@dataclass(frozen=True, eq=False)
class DailyClimatePanel:
    """Validated daily climate records joined to their regions.

    ``records`` has columns ``region_id, cell_id, date, tmax, tmin, precip``
    sorted by region, cell and date; ``cells`` is the cell map.
    """

    records: pd.DataFrame
    cells: pd.DataFrame

    @property
    def regions(self) -> list[str]:
        return sorted(self.records["region_id"].unique())

    def region(self, region_id: str) -> pd.DataFrame:
        return self.records[self.records["region_id"] == region_id]

    def __len__(self):
        return len(self.records)


def _read_csv(path, columns) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise IngestError(f"{path}: cannot parse CSV: {exc}") from exc
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise IngestError(f"{path}: missing columns {missing}")
    return frame[list(columns)]


def _line(idx) -> int:
    # header is line 1
    return int(idx) + 2


def _numeric(frame, column, path, allow_empty=False) -> pd.Series:
    raw = frame[column].str.strip()
    values = pd.to_numeric(raw, errors="coerce")
    bad = values.isna() & ~(allow_empty & (raw == ""))
    bad |= np.isinf(values.fillna(0.0))
    if bad.any():
        idx = bad.idxmax()
        raise IngestError(
            f"{path}: malformed {column} value {frame[column].iloc[idx]!r} on line {_line(idx)}"
        )
    return values.astype(float)


def _dates(frame, path) -> pd.Series:
    raw = frame["date"].str.strip()
    dates = pd.to_datetime(raw, format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        idx = dates.isna().idxmax()
        raise IngestError(f"{path}: malformed date {raw.iloc[idx]!r} on line {_line(idx)}")
    return dates


def _ids(frame, column, path) -> pd.Series:
    ids = frame[column].str.strip()
    empty = ids == ""
    if empty.any():
        raise IngestError(f"{path}: empty {column} on line {_line(empty.idxmax())}")
    return ids


def _check_coords(frame, path):
    lat_bad = ~frame["lat"].between(-90, 90)
    lon_bad = ~frame["lon"].between(-180, 180)
    bad = lat_bad | lon_bad
    if bad.any():
        raise IngestError(f"{path}: coordinates out of range on line {_line(bad.idxmax())}")


def load_cell_map(path) -> pd.DataFrame:
    raw = _read_csv(path, CELL_MAP_COLUMNS)
    cells = pd.DataFrame(
        {
            "cell_id": _ids(raw, "cell_id", path),
            "lat": _numeric(raw, "lat", path),
            "lon": _numeric(raw, "lon", path),
            "region_id": _ids(raw, "region_id", path),
        }
    )
    _check_coords(cells, path)
    dup = cells["cell_id"].duplicated()
    if dup.any():
        idx = dup.idxmax()
        raise IngestError(
            f"{path}: cell {cells['cell_id'].iloc[idx]!r} mapped twice (line {_line(idx)})"
        )
    return cells


def load_climate_csv(path, cell_map) -> DailyClimatePanel:
    """Load daily gridded climate records and attach each cell's region.

    Raises :class:`IngestError` on malformed rows (with the line number),
    ``tmax < tmin``, negative precipitation, unknown cells and duplicate
    ``(cell_id, date)`` keys.
    """
    cells = cell_map if isinstance(cell_map, pd.DataFrame) else load_cell_map(cell_map)
    raw = _read_csv(path, CLIMATE_COLUMNS)
    frame = pd.DataFrame(
        {
            "cell_id": _ids(raw, "cell_id", path),
            "date": _dates(raw, path),
            "tmax": _numeric(raw, "tmax", path),
            "tmin": _numeric(raw, "tmin", path),
            "precip": _numeric(raw, "precip", path),
        }
    )
    crossed = frame["tmax"] < frame["tmin"]
    if crossed.any():
        idx = crossed.idxmax()
        raise IngestError(
            f"{path}: tmax {frame['tmax'].iloc[idx]} < tmin {frame['tmin'].iloc[idx]} "
            f"on line {_line(idx)}"
        )
    negative = frame["precip"] < 0
    if negative.any():
        raise IngestError(f"{path}: negative precip on line {_line(negative.idxmax())}")
    region_of = cells.set_index("cell_id")["region_id"]
    unknown = ~frame["cell_id"].isin(region_of.index)
    if unknown.any():
        idx = unknown.idxmax()
        raise IngestError(
            f"{path}: unknown cell_id {frame['cell_id'].iloc[idx]!r} on line {_line(idx)}"
        )
    dup = frame.duplicated(["cell_id", "date"])
    if dup.any():
        idx = dup.idxmax()
        raise IngestError(
            f"{path}: duplicate key (cell {frame['cell_id'].iloc[idx]}, "
            f"{frame['date'].iloc[idx].date()}) on line {_line(idx)}"
        )
    frame.insert(0, "region_id", frame["cell_id"].map(region_of))
    frame = frame.sort_values(["region_id", "cell_id", "date"], kind="mergesort")
    frame = frame.reset_index(drop=True)
    return DailyClimatePanel(records=frame, cells=cells.reset_index(drop=True))


def write_climate_csv(panel: DailyClimatePanel, path, cell_map_path=None):
    out = panel.records[list(CLIMATE_COLUMNS)].copy()
    out["date"] = out["date"].dt.strftime("%Y-%m-%d")
    out.to_csv(path, index=False)
    if cell_map_path is not None:
        panel.cells[list(CELL_MAP_COLUMNS)].to_csv(cell_map_path, index=False)


def load_aod_sites(path) -> list[AodSite]:
    raw = _read_csv(path, SITE_COLUMNS)
    frame = pd.DataFrame(
        {
            "site_id": _ids(raw, "site_id", path),
            "lat": _numeric(raw, "lat", path),
            "lon": _numeric(raw, "lon", path),
        }
    )
    _check_coords(frame, path)
    if frame["site_id"].duplicated().any():
        raise IngestError(f"{path}: duplicate site_id")
    return [AodSite(r.site_id, r.lat, r.lon) for r in frame.itertuples(index=False)]


def load_aod_daily(path, sites=None) -> pd.DataFrame:
    """Daily AOD records; missing retrievals come back as NaN."""
    raw = _read_csv(path, AOD_COLUMNS)
    frame = pd.DataFrame(
        {
            "site_id": _ids(raw, "site_id", path),
            "date": _dates(raw, path),
            "aod": _numeric(raw, "aod", path, allow_empty=True),
        }
    )
    negative = frame["aod"] < 0
    if negative.any():
        raise IngestError(f"{path}: negative aod on line {_line(negative.idxmax())}")
    if sites is not None:
        known = {s.site_id for s in sites}
        unknown = ~frame["site_id"].isin(known)
        if unknown.any():
            idx = unknown.idxmax()
            raise IngestError(
                f"{path}: unknown site_id {frame['site_id'].iloc[idx]!r} on line {_line(idx)}"
            )
    if frame.duplicated(["site_id", "date"]).any():
        idx = frame.duplicated(["site_id", "date"]).idxmax()
        raise IngestError(f"{path}: duplicate (site, date) on line {_line(idx)}")
    return frame


def load_centroids(path) -> list[RegionCentroid]:
    raw = _read_csv(path, CENTROID_COLUMNS)
    frame = pd.DataFrame(
        {
            "region_id": _ids(raw, "region_id", path),
            "lat": _numeric(raw, "lat", path),
            "lon": _numeric(raw, "lon", path),
        }
    )
    _check_coords(frame, path)
    if frame["region_id"].duplicated().any():
        raise IngestError(f"{path}: more than one centroid for a region")
    return [RegionCentroid(r.region_id, r.lat, r.lon) for r in frame.itertuples(index=False)]


def idw_weights(site_lat, site_lon, lat, lon, power=1.0) -> np.ndarray:
    """Normalised inverse-distance weights of sites relative to one point.

    Distances are Euclidean in degree coordinates. If any site coincides
    with the point, the coincident sites share all the weight.
    """
    if power <= 0:
        raise ValueError("power must be positive")
    d = np.hypot(np.asarray(site_lat, float) - lat, np.asarray(site_lon, float) - lon)
    zero = d == 0
    if zero.any():
        return zero / zero.sum()
    w = d ** (-power)
    return w / w.sum()


def _full_weeks(days: pd.DatetimeIndex) -> list[Week]:
    """ISO weeks whose seven days are all present in ``days``."""
    if len(days) == 0:
        return []
    iso = days.isocalendar()
    keys = pd.MultiIndex.from_arrays([iso["year"], iso["week"]])
    counts = pd.Series(1, index=keys).groupby(level=[0, 1]).sum()
    return [(int(y), int(w)) for (y, w), n in counts.items() if n == 7]


def aod_weekly_by_region(
    sites: list[AodSite],
    records: pd.DataFrame,
    centroids: list[RegionCentroid],
    power: float = 1.0,
) -> list[WeeklySeries]:
    """Distance-weighted regional AOD, averaged to full ISO weeks.

    Each day, a region's value is ``sum(w_j * aod_j) / sum(w_j)`` over the
    sites that reported, with ``w_j = d_j ** -power``. A site at zero distance
    from the centroid supplies the value exactly. Weekly values average the
    days with at least one report; a week with no reports at all raises
    :class:`IngestError`.
    """
    if power <= 0:
        raise ValueError("power must be positive")
    site_ids = [s.site_id for s in sites]
    table = records.pivot(index="date", columns="site_id", values="aod")
    table = table.reindex(columns=site_ids)
    full_days = pd.date_range(table.index.min(), table.index.max(), freq="D")
    table = table.reindex(full_days)
    values = table.to_numpy(dtype=float)
    reported = ~np.isnan(values)
    filled = np.where(reported, values, 0.0)
    lat = np.array([s.lat for s in sites])
    lon = np.array([s.lon for s in sites])
    weeks = _full_weeks(full_days)
    iso = full_days.isocalendar()

    day_week = pd.MultiIndex.from_arrays([iso["year"].astype(int), iso["week"].astype(int)])
    wanted = pd.MultiIndex.from_tuples(weeks)

    out = []
    for c in centroids:
        d = np.hypot(lat - c.lat, lon - c.lon)
        coincident = d == 0
        w = np.where(coincident, 0.0, np.where(coincident, 1.0, d) ** (-power))
        num = (filled * w).sum(axis=1)
        den = (reported * w).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            daily = num / den
            if coincident.any():
                hits = (reported & coincident).sum(axis=1)
                exact = (filled * coincident).sum(axis=1) / hits
                daily = np.where(hits > 0, exact, daily)
        # NaN days are skipped by the mean; all-NaN weeks come out NaN
        weekly = pd.Series(daily, index=day_week).groupby(level=[0, 1]).mean().reindex(wanted)
        empty = weekly.isna()
        if empty.any():
            week = weekly.index[empty.argmax()]
            raise IngestError(
                f"{c.region_id}: no AOD reports at all in week {format_week(tuple(week))}"
            )
        out.append(WeeklySeries(c.region_id, tuple(weeks), weekly.to_numpy()))
    return out


def aggregate_weekly(panel: DailyClimatePanel) -> dict[tuple[str, Week], pd.DataFrame]:
    """Partition a panel into ``(region_id, iso_week)`` groups.

    Weeks whose seven calendar days are not all present for the region are
    dropped and logged.
    """
    groups = {}
    for region_id, frame in panel.records.groupby("region_id", sort=True):
        days = pd.DatetimeIndex(frame["date"].unique()).sort_values()
        keep = set(_full_weeks(days))
        iso = frame["date"].dt.isocalendar()
        keys = list(zip(iso["year"].astype(int), iso["week"].astype(int)))
        key_index = pd.Series(keys, index=frame.index)
        dropped = 0
        for week, idx in key_index.groupby(key_index).groups.items():
            if week in keep:
                groups[(region_id, week)] = frame.loc[idx]
            else:
                dropped += len(idx)
        if dropped:
            logger.warning("%s: dropped %d records in partial weeks", region_id, dropped)
        if not keep:
            logger.warning("%s: no complete ISO week in the panel", region_id)
    return dict(sorted(groups.items()))


def load_discharges_csv(path, regions=None) -> list[WeeklySeries]:
    """Weekly discharge counts, one contiguous series per region."""
    raw = _read_csv(path, DISCHARGE_COLUMNS)
    region = _ids(raw, "region_id", path)
    year = _numeric(raw, "iso_year", path)
    week = _numeric(raw, "iso_week", path)
    count = _numeric(raw, "count", path)
    for name, col in (("iso_year", year), ("iso_week", week), ("count", count)):
        frac = col != np.floor(col)
        if frac.any():
            raise IngestError(f"{path}: non-integer {name} on line {_line(frac.idxmax())}")
    negative = count < 0
    if negative.any():
        idx = negative.idxmax()
        raise IngestError(f"{path}: negative count {int(count.iloc[idx])} on line {_line(idx)}")
    if regions is not None:
        unknown = ~region.isin(list(regions))
        if unknown.any():
            idx = unknown.idxmax()
            raise IngestError(f"{path}: unknown region {region.iloc[idx]!r} on line {_line(idx)}")
    frame = pd.DataFrame(
        {"region_id": region, "year": year.astype(int), "week": week.astype(int), "count": count}
    )
    for r in frame.itertuples():
        try:
            dt.date.fromisocalendar(r.year, r.week, 1)
        except ValueError:
            raise IngestError(f"{path}: invalid ISO week {r.year}-W{r.week} on line {_line(r.Index)}")
    if frame.duplicated(["region_id", "year", "week"]).any():
        idx = frame.duplicated(["region_id", "year", "week"]).idxmax()
        raise IngestError(f"{path}: duplicate region-week on line {_line(idx)}")
    out = []
    for region_id, part in frame.groupby("region_id", sort=True):
        part = part.sort_values(["year", "week"])
        weeks = tuple(zip(part["year"], part["week"]))
        out.append(WeeklySeries(region_id, weeks, part["count"].to_numpy()))
    return out


def write_discharges_csv(series: list[WeeklySeries], path):
    rows = []
    for s in series:
        for (y, w), v in zip(s.weeks, s.values):
            rows.append((s.region_id, y, w, int(v)))
    pd.DataFrame(rows, columns=list(DISCHARGE_COLUMNS)).to_csv(path, index=False)


def week_of_date(day) -> Week:
    return week_of(pd.Timestamp(day).date())
