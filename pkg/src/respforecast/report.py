"""Artifact writers and readers. Every file is written atomically."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import pandas as pd

from .weeks import format_week, parse_week

FLOAT_FORMAT = "%.6f"
FORECAST_COLUMNS = ["region", "week", "method", "point", "lower", "upper"]
PLOT_COLUMNS = ["week", "observed", "predicted", "lower", "upper"]
HYPER_ORDER = {
    "RF": ["mtry", "min_n"],
    "XGBOOST": ["mtry", "min_n", "tree_depth", "learn_rate", "loss_reduction", "sample_size"],
    "PROPHET": ["prior_scale_changepoints", "prior_scale_seasonality"],
}


def write_atomic(path, data: str | bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(frame: pd.DataFrame, path, index=False):
    write_atomic(path, frame.to_csv(index=index, float_format=FLOAT_FORMAT, lineterminator="\n"))


def forecast_rows(region, result) -> list[dict]:
    rows = []
    for label, m in result.methods.items():
        for w, p, lo, hi in zip(m.test.weeks, m.test.point, m.test.lower, m.test.upper):
            rows.append({"region": region, "week": format_week(w), "method": label, "point": p, "lower": lo, "upper": hi})
    return rows


def read_forecasts(path) -> pd.DataFrame:
    frame = pd.read_csv(path)
    missing = [c for c in FORECAST_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    frame["week"].map(parse_week)  # validates labels
    return frame


def hyperparameter_layout(bundles: dict) -> dict:
    """``bundles[region][method] -> params`` regrouped as
    ``{method: {hyperparameter: {region: value}}}``."""
    out = {}
    for method, keys in HYPER_ORDER.items():
        block = {}
        for key in keys:
            block[key] = {r: bundles[r][method].get(key) for r in bundles if method in bundles[r]}
        extra = sorted({k for r in bundles for k in bundles[r].get(method, {})} - set(keys))
        for key in extra:
            block[key] = {r: bundles[r][method].get(key) for r in bundles if method in bundles[r]}
        out[method] = block
    return out


def write_json(obj, path):
    write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def plot_frame(result, method: str) -> pd.DataFrame:
    m = result.methods[method]
    return pd.DataFrame(
        {
            "week": [format_week(w) for w in m.test.weeks],
            "observed": result.y_test,
            "predicted": m.test.point,
            "lower": m.test.lower,
            "upper": m.test.upper,
        }
    )


def render_svg(frame: pd.DataFrame, title: str, path):
    """Static observed-vs-predicted chart with the interval band."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "respforecast"
    x = range(len(frame))
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.fill_between(x, frame["lower"], frame["upper"], color="tab:blue", alpha=0.2, label="interval")
    ax.plot(x, frame["observed"], color="black", lw=1.2, label="observed")
    ax.plot(x, frame["predicted"], color="tab:blue", lw=1.2, label="predicted")
    step = max(1, len(frame) // 8)
    ax.set_xticks(list(x)[::step])
    ax.set_xticklabels(frame["week"].iloc[::step], rotation=30, fontsize=7)
    ax.set_title(title)
    ax.set_ylabel("weekly discharges")
    ax.legend(fontsize=7, loc="upper left")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    fig.savefig(tmp, format="svg", metadata={"Date": None})
    plt.close(fig)
    os.replace(tmp, path)
