"""From raw input files to one design matrix per region."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import pandas as pd

from .config import RunConfig
from .errors import FeatureError
from .features import (
    FeatureMatrix,
    PercentileBaseline,
    align_inputs,
    build_design_matrix,
    compute_baseline,
    log_transform_precip,
    weekly_indices,
)
from .ingest import (
    DailyClimatePanel,
    aod_weekly_by_region,
    load_aod_daily,
    load_aod_sites,
    load_cell_map,
    load_centroids,
    load_climate_csv,
    load_discharges_csv,
)
from .weeks import year_span

log = logging.getLogger(__name__)


@dataclass
class Inputs:
    panel: DailyClimatePanel
    aod: dict  # region -> WeeklySeries
    discharges: dict  # region -> WeeklySeries
    baseline: PercentileBaseline

    @property
    def regions(self) -> list[str]:
        return sorted(set(self.panel.regions) & set(self.aod) & set(self.discharges))


def load_inputs(cfg: RunConfig) -> Inputs:
    p = cfg.paths
    cell_map = load_cell_map(p["cell_map"])
    panel = load_climate_csv(p["climate"], cell_map)
    sites = load_aod_sites(p["aod_sites"])
    records = load_aod_daily(p["aod_daily"], sites)
    centroids = load_centroids(p["centroids"])
    known = set(panel.regions)
    unknown = [c.region_id for c in centroids if c.region_id not in known]
    if unknown:
        raise FeatureError(f"centroids for regions without climate cells: {unknown}")
    aod = {s.region_id: s for s in aod_weekly_by_region(sites, records, centroids, cfg.idw_power)}
    hd = {s.region_id: s for s in load_discharges_csv(p["discharges"], regions=known)}
    period = year_span(*cfg.baseline_years) if cfg.baseline_years else None
    baseline = compute_baseline(panel, period, cfg.baseline_mode)
    return Inputs(panel, aod, hd, baseline)


def region_matrix(inputs: Inputs, region: str, aod_lag: int = 10) -> FeatureMatrix:
    """Design matrix with log-transformed precipitation indices."""
    for name, table in (("AOD", inputs.aod), ("discharge", inputs.discharges)):
        if region not in table:
            raise FeatureError(f"no {name} series for region {region!r}")
    idx = weekly_indices(inputs.panel, inputs.baseline, region)
    idx, aod, hd = align_inputs(idx, inputs.aod[region], inputs.discharges[region])
    if len(idx) != len(aod.weeks) or len(idx) != len(hd.weeks):
        raise FeatureError(f"{region}: climate, AOD and discharge weeks have gaps relative to each other")
    return log_transform_precip(build_design_matrix(idx, aod, hd, aod_lag))


def covariate_frame(inputs: Inputs, region: str) -> pd.DataFrame:
    """Same-week covariates plus lagged discharges, aligned with the target,
    for cross-correlation screening."""
    m = region_matrix(inputs, region, aod_lag=0)
    frame = pd.DataFrame(m.X, columns=list(m.feature_names), index=pd.Index(m.weeks, tupleize_cols=False))
    frame = frame.drop(columns=[c for c in ("aerosol_0", "date") if c in frame])
    frame["target"] = m.target
    return frame
