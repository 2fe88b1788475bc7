import filecmp
import json
import shutil

import numpy as np
import pandas as pd
import pytest

from respforecast.cli import main
from respforecast.config import load_config
from respforecast.errors import ConfigError
from respforecast.features import FeatureMatrix, sample_ccf, select_lag
from respforecast.ingest import load_cell_map, load_climate_csv, load_discharges_csv
from respforecast.metrics import EvaluationReport
from respforecast.report import read_forecasts
from respforecast.synthetic import FILES, SyntheticSpec, generate


def quick_config(src, dst, extra=""):
    """Copy of the synthetic dataset whose config uses the small grid."""
    if not dst.exists():
        shutil.copytree(src, dst)
    text = (src / "run.cfg").read_text().replace("grid = full", "grid = quick").replace("shapley_samples = 64", "shapley_samples = 8")
    (dst / "run.cfg").write_text(text + extra)
    return dst / "run.cfg"


# --------------------------------------------------------------- generator
def test_generator_deterministic(tmp_path, synthetic_dir):
    generate(SyntheticSpec(), tmp_path)
    for name in list(FILES.values()) + ["manifest.json", "run.cfg"]:
        assert filecmp.cmp(tmp_path / name, synthetic_dir / name, shallow=False), name


def test_generator_contents(synthetic_dir):
    panel = load_climate_csv(synthetic_dir / FILES["climate"], load_cell_map(synthetic_dir / FILES["cell_map"]))
    assert (panel.records["tmax"] >= panel.records["tmin"]).all()
    assert len(panel.regions) == 7
    hd = load_discharges_csv(synthetic_dir / FILES["discharges"])
    assert len(hd) == 7 and all((s.values >= 0).all() for s in hd)
    manifest = json.loads((synthetic_dir / "manifest.json").read_text())
    assert manifest["coefficients"]["aod_lag"] == 10


def test_generated_aod_peaks_at_injected_lag(synthetic_config):
    from respforecast.dataset import covariate_frame, load_inputs

    inputs = load_inputs(synthetic_config)
    lags = [select_lag(sample_ccf(covariate_frame(inputs, r)["aerosol"], covariate_frame(inputs, r)["target"], 20)) for r in inputs.regions]
    assert sum(l == 10 for l in lags) >= 6


# --------------------------------------------------------------- config
def test_config_paths_relative_to_file(synthetic_config, synthetic_dir):
    assert synthetic_config.paths["climate"] == synthetic_dir.resolve() / FILES["climate"]
    assert synthetic_config.train_years == (2001, 2018) and synthetic_config.test_years == (2019, 2019)


def test_config_errors(tmp_path, synthetic_dir):
    bad = quick_config(synthetic_dir, tmp_path / "d", "colour = blue\n")
    with pytest.raises(ConfigError, match="unknown keys"):
        load_config(bad)
    cfg = quick_config(synthetic_dir, tmp_path / "d")
    (tmp_path / "d" / FILES["centroids"]).unlink()
    with pytest.raises(ConfigError, match="centroids"):
        load_config(cfg).validate()


# --------------------------------------------------------------- commands
def test_missing_file_exits_2(tmp_path, synthetic_dir, capsys):
    cfg = quick_config(synthetic_dir, tmp_path / "d")
    (tmp_path / "d" / FILES["discharges"]).unlink()
    assert main(["run", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "[run]" in err and FILES["discharges"] in err
    assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_ccf_command(tmp_path, synthetic_dir, capsys):
    cfg = quick_config(synthetic_dir, tmp_path / "d")
    assert main(["ccf", "--config", str(cfg), "--covariate", "aerosol"]) == 0
    summary = pd.read_csv(tmp_path / "d" / "results" / "ccf_aerosol_summary.csv")
    assert (summary["best_lag"] == 10).sum() >= 6
    assert main(["ccf", "--config", str(cfg), "--covariate", "egreso_1"]) == 0
    summary = pd.read_csv(tmp_path / "d" / "results" / "ccf_egreso_1_summary.csv")
    assert (summary["best_lag"] == 0).all() and (summary["r"] > 0.3).all()
    assert main(["ccf", "--config", str(cfg), "--covariate", "nonsense"]) == 2
    assert "unknown covariate" in capsys.readouterr().err


def test_ingest_and_features_commands(tmp_path, synthetic_dir):
    cfg = quick_config(synthetic_dir, tmp_path / "d", "regions = brunca\n")
    assert main(["ingest-check", "--config", str(cfg)]) == 0
    assert main(["features", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    m = FeatureMatrix.from_csv(tmp_path / "out" / "features" / "brunca.csv")
    assert m.feature_names[-1] == "date" and "aerosol_10" in m.feature_names
    assert not np.isnan(m.X).any()


@pytest.fixture(scope="module")
def run_dirs(tmp_path_factory, synthetic_dir):
    base = tmp_path_factory.mktemp("cli")
    cfg = quick_config(synthetic_dir, base / "d", "regions = brunca, chorotega\n")
    codes = [main(["run", "--config", str(cfg), "--out", str(base / out)]) for out in ("a", "b")]
    return base, codes


def test_run_writes_all_artifacts(run_dirs):
    base, codes = run_dirs
    assert codes == [0, 0]
    a = base / "a"
    for name in ("forecasts.csv", "evaluation.csv", "importance.csv", "hyperparameters.json", "plots/brunca.csv", "plots/chorotega.csv"):
        assert (a / name).is_file(), name
    fc = read_forecasts(a / "forecasts.csv")
    assert set(fc["method"]) == {"RF", "XGBOOST", "PROPHET", "ENSEMBLE"}
    assert len(fc) == 2 * 4 * 52
    assert (fc["lower"] <= fc["point"]).all() and (fc["point"] <= fc["upper"]).all()
    rep = EvaluationReport.from_csv(a / "evaluation.csv")
    assert set(rep.selected()) == {"brunca", "chorotega"}
    hp = json.loads((a / "hyperparameters.json").read_text())
    assert set(hp) == {"RF", "XGBOOST", "PROPHET"} and set(hp["RF"]["mtry"]) == {"brunca", "chorotega"}
    imp = pd.read_csv(a / "importance.csv", index_col=0)
    assert list(imp.columns) == ["brunca", "chorotega"]
    shown = imp.to_numpy()[~np.isnan(imp.to_numpy())]
    assert (shown >= 1.0).all() and (imp.fillna(0).sum() <= 100 + 1e-6).all()


def test_run_is_reproducible(run_dirs):
    base, _ = run_dirs
    files = sorted(p.relative_to(base / "a") for p in (base / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (base / "a" / f).read_bytes() == (base / "b" / f).read_bytes(), f


def test_report_command(run_dirs, capsys):
    base, _ = run_dirs
    assert main(["report", str(base / "a"), "--svg"]) == 0
    assert (base / "a" / "plots" / "brunca.svg").is_file()
    assert "XGBOOST" in capsys.readouterr().out
    assert main(["report", str(base / "missing")]) == 2
