"""Run configuration: ``key = value`` lines, paths relative to the file."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .metrics import CONVENTIONS

PATH_KEYS = ("climate", "cell_map", "aod_sites", "aod_daily", "centroids", "discharges")


def _years(text: str, key: str) -> tuple[int, int]:
    try:
        a, _, b = text.partition("-")
        first, last = int(a), int(b or a)
    except ValueError:
        raise ConfigError(f"{key}: expected YEAR or YEAR-YEAR, got {text!r}") from None
    if last < first:
        raise ConfigError(f"{key}: {last} precedes {first}")
    return first, last


@dataclass(frozen=True)
class RunConfig:
    paths: dict
    output: Path
    train_years: tuple[int, int] = (2001, 2018)
    test_years: tuple[int, int] = (2019, 2019)
    alpha: float = 0.05
    aod_lag: int = 10
    idw_power: float = 1.0
    baseline_years: tuple[int, int] | None = None
    baseline_mode: str = "cell"
    seed: int = 0
    convention: str = "table"
    grid: str = "full"
    shapley_samples: int = 64
    importance_threshold: float = 1.0
    regions: tuple[str, ...] = field(default=())
    source: Path | None = None

    def validate(self, check_files: bool = True) -> "RunConfig":
        missing = [k for k in PATH_KEYS if k not in self.paths]
        if missing:
            raise ConfigError(f"config lacks input paths: {missing}")
        if check_files:
            for key in PATH_KEYS:
                if not Path(self.paths[key]).is_file():
                    raise ConfigError(f"{key}: file not found: {self.paths[key]}")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.convention not in CONVENTIONS:
            raise ConfigError(f"convention must be one of {CONVENTIONS}")
        if self.aod_lag < 0:
            raise ConfigError("aod_lag must be non-negative")
        if self.idw_power <= 0:
            raise ConfigError("idw_power must be positive")
        if self.shapley_samples < 1:
            raise ConfigError("shapley_samples must be at least 1")
        if self.train_years[1] >= self.test_years[0]:
            raise ConfigError("training years must precede test years")
        return self

    def override(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def load_config(path) -> RunConfig:
    """Parse a config file; relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[run]\n" + path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raw = dict(parser["run"])
    base = path.parent.resolve()

    def resolve(value):
        p = Path(value).expanduser()
        return p if p.is_absolute() else base / p

    paths = {}
    for key in PATH_KEYS:
        if key in raw:
            paths[key] = resolve(raw.pop(key))
    kw = {}
    try:
        if "output" in raw:
            kw["output"] = resolve(raw.pop("output"))
        for key in ("train_years", "test_years", "baseline_years"):
            if key in raw:
                kw[key] = _years(raw.pop(key), key)
        for key, cast in (
            ("alpha", float),
            ("aod_lag", int),
            ("idw_power", float),
            ("seed", int),
            ("shapley_samples", int),
            ("importance_threshold", float),
        ):
            if key in raw:
                kw[key] = cast(raw.pop(key))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for key in ("convention", "grid", "baseline_mode"):
        if key in raw:
            kw[key] = raw.pop(key)
    if "regions" in raw:
        kw["regions"] = tuple(r.strip() for r in raw.pop("regions").split(",") if r.strip())
    if raw:
        raise ConfigError(f"{path}: unknown keys {sorted(raw)}")
    kw.setdefault("output", base / "results")
    return RunConfig(paths=paths, source=path, **kw)
