"""``respforecast`` command line.

Exit codes: 0 success, 1 computational failure, 2 input or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from .errors import ComputationError, ConfigError, InputError

log = logging.getLogger("respforecast")

EXIT_OK, EXIT_COMPUTE, EXIT_INPUT = 0, 1, 2


def _config(args):
    from .config import load_config

    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    cfg = cfg.override(
        seed=getattr(args, "seed", None),
        alpha=getattr(args, "alpha", None),
        convention=getattr(args, "convention", None),
        output=Path(args.out) if getattr(args, "out", None) else None,
    )
    return cfg.validate()


def cmd_generate_synthetic(args) -> int:
    from .synthetic import SyntheticSpec, generate

    spec = SyntheticSpec(
        n_regions=args.regions,
        n_cells_per_region=args.cells,
        first_year=args.first_year,
        last_year=args.last_year,
        seed=args.seed if args.seed is not None else 0,
    )
    out = Path(args.out or "synthetic")
    try:
        generate(spec, out)
    except OSError as exc:
        raise InputError(str(exc)) from exc
    print(f"wrote synthetic dataset to {out}")
    return EXIT_OK


def cmd_ingest_check(args) -> int:
    from .dataset import load_inputs

    cfg = _config(args)
    inputs = load_inputs(cfg)
    print(f"{len(inputs.panel)} daily climate records, {len(inputs.panel.cells)} cells")
    for r in inputs.regions:
        aod, hd = inputs.aod[r], inputs.discharges[r]
        print(f"{r}: AOD {len(aod)} weeks, discharges {len(hd)} weeks ({hd.weeks[0]} .. {hd.weeks[-1]})")
    return EXIT_OK


def cmd_features(args) -> int:
    from .runner import build_matrices

    cfg = _config(args)
    out = Path(cfg.output) / "features"
    from .report import write_csv

    for region, m in build_matrices(cfg).items():
        write_csv(m.to_frame(), out / f"{region}.csv")
        print(f"{region}: {len(m)} rows x {len(m.feature_names)} features")
    return EXIT_OK


def cmd_ccf(args) -> int:
    from .dataset import covariate_frame, load_inputs
    from .features import sample_ccf, select_lag
    from .report import write_csv

    cfg = _config(args)
    inputs = load_inputs(cfg)
    rows, summary = [], []
    for region in list(cfg.regions) or inputs.regions:
        frame = covariate_frame(inputs, region)
        if args.covariate not in frame.columns or args.covariate == "target":
            choices = ", ".join(c for c in frame.columns if c != "target")
            raise InputError(f"unknown covariate {args.covariate!r}; choose from {choices}")
        ccf = sample_ccf(frame[args.covariate], frame["target"], args.max_lag)
        rows += [{"region": region, "lag": k, "r": r} for k, r in ccf]
        best = select_lag(ccf)
        summary.append({"region": region, "best_lag": best, "r": dict(ccf)[best]})
    table = pd.DataFrame(rows)
    best = pd.DataFrame(summary)
    out = Path(cfg.output)
    write_csv(table, out / f"ccf_{args.covariate}.csv")
    write_csv(best, out / f"ccf_{args.covariate}_summary.csv")
    print(best.to_string(index=False))
    return EXIT_OK


def cmd_tune(args) -> int:
    from .pipeline import LEARNERS, METHOD_LABELS, Split, default_grids, grid_search, make_windows
    from .report import hyperparameter_layout, write_json
    from .runner import build_matrices

    cfg = _config(args)
    split = Split.from_years(cfg.train_years[0], cfg.train_years[1], cfg.test_years[0], cfg.test_years[1])
    grids = default_grids(cfg.grid)
    chosen = {}
    for region, m in build_matrices(cfg).items():
        train, _ = split.masks(m)
        rows = train.nonzero()[0]
        windows = make_windows([m.weeks[i] for i in rows])
        chosen[region] = {}
        for kind in LEARNERS:
            res = grid_search(m, kind, grids[kind], windows, cfg.seed, rows=rows)
            chosen[region][METHOD_LABELS[kind]] = res.best_bundle
            print(f"{region} {METHOD_LABELS[kind]}: {res.best_bundle} (mean RMSE {res.mean_rmse[res.best_index]:.3f})")
    write_json(hyperparameter_layout(chosen), Path(cfg.output) / "hyperparameters.json")
    return EXIT_OK


def cmd_run(args) -> int:
    from .runner import run

    cfg = _config(args)
    paths = run(cfg, jobs=args.jobs, svg=args.svg)
    print(f"wrote {len(paths)} artifacts to {cfg.output}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .metrics import EvaluationReport
    from .report import render_svg

    results = Path(args.results)
    ev = results / "evaluation.csv"
    if not ev.is_file():
        raise InputError(f"no evaluation.csv in {results}")
    rep = EvaluationReport.from_csv(ev)
    print(rep.table.to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    if args.svg:
        selected = rep.selected()
        for plot in sorted((results / "plots").glob("*.csv")):
            frame = pd.read_csv(plot)
            render_svg(frame, f"{plot.stem} ({selected.get(plot.stem, '?')})", plot.with_suffix(".svg"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="respforecast", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help="output directory (overrides the config)"):
        p.add_argument("--config", help="run configuration file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--alpha", type=float, help="interval miscoverage level")
        p.add_argument("--convention", choices=["table", "text"], help="relative-ratio convention")
        p.add_argument("--out", help=out_help)
        p.add_argument("--jobs", type=int, default=1, help="regions processed in parallel")

    p = sub.add_parser("generate-synthetic", help="write a seeded synthetic dataset")
    p.add_argument("--out", help="output directory", default="synthetic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--regions", type=int, default=7)
    p.add_argument("--cells", type=int, default=4)
    p.add_argument("--first-year", type=int, default=2000)
    p.add_argument("--last-year", type=int, default=2019)
    p.set_defaults(func=cmd_generate_synthetic, stage="generate")

    p = sub.add_parser("ingest-check", help="load and validate all inputs")
    common(p)
    p.set_defaults(func=cmd_ingest_check, stage="ingest")

    p = sub.add_parser("features", help="write per-region design matrices")
    common(p)
    p.set_defaults(func=cmd_features, stage="features")

    p = sub.add_parser("ccf", help="lagged cross-correlation of a covariate with discharges")
    common(p)
    p.add_argument("--covariate", default="aerosol")
    p.add_argument("--max-lag", type=int, default=20)
    p.set_defaults(func=cmd_ccf, stage="ccf")

    p = sub.add_parser("tune", help="grid search only")
    common(p)
    p.set_defaults(func=cmd_tune, stage="tune")

    p = sub.add_parser("run", help="full protocol and all artifacts")
    common(p)
    p.add_argument("--svg", action="store_true", help="also render SVG charts")
    p.set_defaults(func=cmd_run, stage="run")

    p = sub.add_parser("report", help="summarise an existing results directory")
    p.add_argument("results", help="directory written by `run`")
    p.add_argument("--svg", action="store_true", help="render SVG charts from plot data")
    p.set_defaults(func=cmd_report, stage="report")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, KeyError) as exc:
        print(f"[{args.stage}] input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ComputationError, ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"[{args.stage}] computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
