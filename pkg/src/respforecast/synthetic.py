"""Seeded synthetic dataset with the same file layout as the real inputs.

Daily climate per grid cell follows annual cycles plus noise. AOD comes
from 12 sites on a 1-degree grid sharing a weekly AR(1) driver, with about
10% of daily reports missing. Weekly discharges are Poisson counts around

    base + b_aod * z(AOD_{t-10}) + b_tmin * z(Tmin_mean_t) + b_precip * z(log1p precip_mean_t) + u_t

where ``u_t`` is AR(2) and ``z`` standardises over the whole series. The
coefficients are written to ``manifest.json``.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .ingest import AodSite, RegionCentroid, aod_weekly_by_region
from .weeks import week_of

REGION_SLUGS = (
    "brunca",
    "central_norte",
    "central_sur",
    "chorotega",
    "huetar_atlantica",
    "huetar_norte",
    "pacifico_central",
)
FILES = {
    "climate": "climate.csv",
    "cell_map": "cell_map.csv",
    "aod_sites": "aod_sites.csv",
    "aod_daily": "aod_daily.csv",
    "centroids": "centroids.csv",
    "discharges": "discharges.csv",
}


@dataclass(frozen=True)
class SyntheticSpec:
    n_regions: int = 7
    n_cells_per_region: int = 4
    first_year: int = 2000
    last_year: int = 2019
    seed: int = 0
    aod_lag: int = 10
    base_level: float = 80.0
    b_aod: float = 12.0
    b_tmin: float = 8.0
    b_precip: float = 6.0
    ar: tuple[float, float] = (0.45, 0.25)
    ar_sd: float = 5.0
    aod_phi: float = 0.3
    missing_aod: float = 0.1
    noise_scale: float = 1.0
    regions: tuple[str, ...] = field(default=())

    def validate(self):
        if self.n_regions < 1 or self.n_cells_per_region < 1:
            raise ValueError("n_regions and n_cells_per_region must be positive")
        if self.last_year < self.first_year:
            raise ValueError("last_year precedes first_year")
        if not 0 <= self.missing_aod < 1:
            raise ValueError("missing_aod must lie in [0, 1)")

    def region_ids(self) -> list[str]:
        if self.regions:
            return list(self.regions)
        if self.n_regions <= len(REGION_SLUGS):
            return list(REGION_SLUGS[: self.n_regions])
        return [f"region_{k + 1}" for k in range(self.n_regions)]


def _zscore(x):
    return (x - x.mean()) / x.std()


def _ar2(rng, n, phi, sd, burn=200):
    e = rng.normal(0.0, sd, n + burn)
    u = np.zeros(n + burn)
    for t in range(2, n + burn):
        u[t] = phi[0] * u[t - 1] + phi[1] * u[t - 2] + e[t]
    return u[burn:]


def generate(spec: SyntheticSpec, out_dir) -> dict:
    """Write the five input CSVs (climate split into data + cell map),
    ``manifest.json`` and a ready-to-run ``run.cfg`` into ``out_dir``."""
    spec.validate()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    rng = np.random.default_rng(spec.seed)
    regions = spec.region_ids()
    days = pd.date_range(dt.date(spec.first_year, 1, 1), dt.date(spec.last_year, 12, 31), freq="D")
    doy = days.dayofyear.to_numpy()
    season = np.sin(2 * np.pi * (doy - 80) / 365.25)
    wet = np.asarray((days.month >= 5) & (days.month <= 11))

    # geography: centroids spread over a 3x3-degree box, cells jittered around them
    centroids = pd.DataFrame(
        {
            "region_id": regions,
            "lat": np.round(8.2 + 2.6 * rng.random(len(regions)), 4),
            "lon": np.round(-85.6 + 3.2 * rng.random(len(regions)), 4),
        }
    )
    cells, climate = [], []
    for r, row in centroids.iterrows():
        offset = rng.normal(0, 1.0)
        for c in range(spec.n_cells_per_region):
            cid = f"{row.region_id}_c{c + 1}"
            cells.append((cid, round(row.lat + rng.normal(0, 0.1), 4), round(row.lon + rng.normal(0, 0.1), 4), row.region_id))
            cell_off = rng.normal(0, 0.5)
            tmax = 30 + offset + cell_off + 2.5 * season + rng.normal(0, 1.2, len(days))
            amp = np.clip(9 + 1.5 * season + rng.normal(0, 1.5, len(days)), 0.5, None)
            tmin = tmax - amp
            rain = rng.random(len(days)) < np.where(wet, 0.65, 0.2)
            precip = np.where(rain, rng.gamma(0.8, 12.0, len(days)), 0.0)
            climate.append(
                pd.DataFrame({"cell_id": cid, "date": days.strftime("%Y-%m-%d"), "tmax": tmax, "tmin": tmin, "precip": precip})
            )
    cell_map = pd.DataFrame(cells, columns=["cell_id", "lat", "lon", "region_id"])
    climate = pd.concat(climate, ignore_index=True)
    # round first, then enforce the ordering on the rounded values
    climate["tmax"] = climate["tmax"].round(2)
    climate["tmin"] = np.minimum(climate["tmin"].round(2), climate["tmax"])
    climate["precip"] = climate["precip"].round(2)

    # AOD: weekly AR(1) driver shared by all sites, site and day noise, gaps
    sites = [(f"s{k + 1:02d}", float(lat), float(lon)) for k, (lat, lon) in enumerate((la, lo) for la in (8, 9, 10, 11) for lo in (-85, -84, -83))]
    day_week = [week_of(d) for d in days.date]
    wk_labels = sorted(set(day_week))
    wk_pos = {w: i for i, w in enumerate(wk_labels)}
    driver = np.zeros(len(wk_labels))
    shocks = rng.normal(0, 0.08, len(wk_labels))
    for i in range(1, len(wk_labels)):
        driver[i] = spec.aod_phi * driver[i - 1] + shocks[i]
    driver += 0.3
    day_idx = np.array([wk_pos[w] for w in day_week])
    aod_rows = []
    for sid, _, _ in sites:
        site_week = driver + rng.normal(0, 0.01, len(wk_labels))
        vals = np.clip(site_week[day_idx] + rng.normal(0, 0.01, len(days)), 0.01, None).round(4)
        missing = rng.random(len(days)) < spec.missing_aod
        aod_rows.append(
            pd.DataFrame({"site_id": sid, "date": days.strftime("%Y-%m-%d"), "aod": np.where(missing, np.nan, vals)})
        )
    aod_daily = pd.concat(aod_rows, ignore_index=True)
    site_frame = pd.DataFrame(sites, columns=["site_id", "lat", "lon"])

    aod_records = aod_daily.assign(date=pd.to_datetime(aod_daily["date"]))
    aod_week = {
        s.region_id: s
        for s in aod_weekly_by_region(
            [AodSite(*s) for s in sites],
            aod_records,
            [RegionCentroid(r.region_id, r.lat, r.lon) for r in centroids.itertuples()],
        )
    }

    # weekly regional climate drivers over whole Monday-Sunday weeks
    clim = climate.merge(cell_map[["cell_id", "region_id"]], on="cell_id")
    clim["wk"] = np.tile(day_idx, len(cells))
    weekly = clim.groupby(["region_id", "wk"])[["tmin", "precip"]].mean()

    discharge_rows, truth = [], {}
    for region in regions:
        series = aod_week[region]
        weeks = list(series.weeks)
        aod = series.values
        n = len(weeks)
        tmin = np.array([weekly.loc[(region, wk_pos[w]), "tmin"] for w in weeks])
        prec = np.log1p(np.array([weekly.loc[(region, wk_pos[w]), "precip"] for w in weeks]))
        za, zt, zp = _zscore(aod), _zscore(tmin), _zscore(prec)
        lagged = np.concatenate([np.zeros(spec.aod_lag), za[: n - spec.aod_lag]])
        u = _ar2(rng, n, spec.ar, spec.ar_sd * spec.noise_scale)
        base = spec.base_level * (0.7 + 0.6 * rng.random())
        mu = base + spec.b_aod * lagged + spec.b_tmin * zt + spec.b_precip * zp + u
        counts = rng.poisson(np.clip(mu, 0.5, None))
        for w, c in zip(weeks, counts):
            discharge_rows.append((region, w[0], w[1], int(c)))
        truth[region] = {"base_level": base, "first_week": f"{weeks[0][0]}-W{weeks[0][1]:02d}"}
    discharges = pd.DataFrame(discharge_rows, columns=["region_id", "iso_year", "iso_week", "count"])

    climate.to_csv(out / FILES["climate"], index=False, float_format="%.2f")
    cell_map.to_csv(out / FILES["cell_map"], index=False, float_format="%.4f")
    site_frame.to_csv(out / FILES["aod_sites"], index=False, float_format="%.4f")
    aod_daily.to_csv(out / FILES["aod_daily"], index=False, float_format="%.4f")
    centroids.to_csv(out / FILES["centroids"], index=False, float_format="%.4f")
    discharges.to_csv(out / FILES["discharges"], index=False)
    manifest = {
        "spec": asdict(spec),
        "regions": regions,
        "coefficients": {
            "aod_lag": spec.aod_lag,
            "b_aod_lag": spec.b_aod,
            "b_tmin_mean": spec.b_tmin,
            "b_log_precip_mean": spec.b_precip,
            "ar": list(spec.ar),
            "ar_sd": spec.ar_sd * spec.noise_scale,
        },
        "per_region": truth,
        "files": FILES,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "run.cfg").write_text(default_config_text(spec))
    return manifest


def default_config_text(spec: SyntheticSpec) -> str:
    first_train = spec.first_year + 1
    return (
        "# synthetic run configuration; paths are relative to this file\n"
        f"climate = {FILES['climate']}\n"
        f"cell_map = {FILES['cell_map']}\n"
        f"aod_sites = {FILES['aod_sites']}\n"
        f"aod_daily = {FILES['aod_daily']}\n"
        f"centroids = {FILES['centroids']}\n"
        f"discharges = {FILES['discharges']}\n"
        "output = results\n"
        f"train_years = {first_train}-{spec.last_year - 1}\n"
        f"test_years = {spec.last_year}-{spec.last_year}\n"
        "alpha = 0.05\n"
        f"aod_lag = {spec.aod_lag}\n"
        "idw_power = 1.0\n"
        f"baseline_years = {spec.first_year}-{spec.last_year - 1}\n"
        "seed = 0\n"
        "convention = table\n"
        "grid = full\n"
        "shapley_samples = 64\n"
    )
