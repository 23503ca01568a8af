"""Command-line front end.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .divergence import DivergenceSpec
from .errors import ConfigError, EmptyData, ParamError, ParseError, PursuitError
from .harness import run_on_data, run_scenario
from .io import GridSpec, emit_density_grid, ingest_csv, read_result
from .pursuit import PursuitConfig, PursuitModel
from .scenarios import SCENARIOS, get_scenario, scenario_from_dict

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
DEFAULT_GAMMA = 1.25


def _shared(p: argparse.ArgumentParser):
    g = p.add_argument_group("pursuit options")
    g.add_argument("--divergence", choices=["kl", "hellinger", "chi2", "power"])
    g.add_argument("--gamma", type=float, help="power-divergence exponent (default 1.25)")
    g.add_argument("--alpha", type=float)
    g.add_argument("--max-k", type=int)
    g.add_argument("--nu", type=float, help="truncation exponent, in (0, 1/(4+d))")
    g.add_argument("--seed", type=int)
    g.add_argument("--instrumental-size", type=int)
    g.add_argument("--anneal-steps", type=int, help="annealing steps per restart")
    g.add_argument("--anneal-restarts", type=int)
    g.add_argument("--paper-threshold", action="store_true", default=None,
                   help="use the literal 0.2533 quantile of the original tables")
    g.add_argument("--output", default=None, help="output directory")


def _csv_opts(p):
    p.add_argument("csv")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--no-header", action="store_true", help="first row is data")
    p.add_argument("--columns", nargs="+", help="column indices or header names")


def _override(cfg: PursuitConfig, args) -> PursuitConfig:
    kw = {}
    if args.divergence is not None or args.gamma is not None:
        name = args.divergence or cfg.spec.name
        gamma = args.gamma if args.gamma is not None else (cfg.spec.gamma or DEFAULT_GAMMA)
        kw["spec"] = DivergenceSpec.from_name(name, gamma)
    if args.alpha is not None:
        kw["alpha"] = args.alpha
    if args.max_k is not None:
        kw["max_k"] = args.max_k
    if args.nu is not None:
        kw["truncation"] = replace(cfg.truncation, nu=args.nu)
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.instrumental_size is not None:
        kw["instrumental_sample_size"] = args.instrumental_size
    if args.paper_threshold:
        kw["paper_threshold"] = True
    anneal = {k: v for k, v in (("steps", args.anneal_steps), ("restarts", args.anneal_restarts)) if v is not None}
    if anneal:
        kw["anneal"] = replace(cfg.anneal, **anneal)
    return replace(cfg, **kw) if kw else cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phipursuit", description="Projection pursuit with phi-divergences.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a bundled scenario or a JSON scenario config")
    p.add_argument("scenario", help=f"one of {', '.join(sorted(SCENARIOS))}, or a config path")
    p.add_argument("--n", type=int, help="sample size (bundled scenarios)")
    p.add_argument("--d", type=int, help="dimension (sim42, null)")
    _shared(p)

    for name, text in [("run", "pursuit on a CSV data set"),
                       ("copula-test", "copula goodness-of-fit test on a CSV data set"),
                       ("regress", "pursuit regression of one column on another")]:
        p = sub.add_parser(name, help=text)
        _csv_opts(p)
        if name == "regress":
            p.add_argument("--response", type=int, default=0)
            p.add_argument("--predictor", type=int, default=1)
            p.add_argument("--tolerance", type=float, default=15.0, help="axis-alignment tolerance, degrees")
        _shared(p)

    p = sub.add_parser("emit-grid", help="write a density grid from a result file")
    p.add_argument("result")
    p.add_argument("--axes", type=int, nargs="+", default=[0, 1])
    p.add_argument("--mins", type=float, nargs="+")
    p.add_argument("--maxs", type=float, nargs="+")
    p.add_argument("--counts", type=int, nargs="+")
    p.add_argument("--fixed", type=float, nargs="+", help="values of all coordinates off the grid axes")
    p.add_argument("--level", type=int, help="use the model truncated to this many levels")
    p.add_argument("--output", help="output CSV path")
    return ap


def _simulate(args) -> int:
    src = Path(args.scenario)
    if args.scenario in SCENARIOS:
        kw = {k: v for k, v in (("n", args.n), ("d", args.d)) if v is not None}
        try:
            cfg = get_scenario(args.scenario, **kw)
        except TypeError:
            raise ConfigError("d", f"scenario {args.scenario!r} has no dimension option") from None
    elif src.is_file():
        try:
            raw = json.loads(src.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(str(src), f"invalid JSON: {exc}") from None
        cfg = scenario_from_dict(raw)
    else:
        raise ConfigError("scenario", f"{args.scenario!r} is neither a bundled scenario nor a file")
    if cfg.name == "sim42" and cfg.d > 10:
        print(f"warning: sim42 at d={cfg.d} is slow and numerically extreme", file=sys.stderr)
    cfg = replace(cfg, pursuit=_override(cfg.pursuit, args))
    if args.output:
        cfg = replace(cfg, output_dir=args.output)
    art = run_scenario(cfg)
    return _finish(art)


def _data_run(args, tasks) -> int:
    data = ingest_csv(args.csv, delimiter=args.delimiter, header=False if args.no_header else None,
                      columns=args.columns)
    cfg = _override(PursuitConfig(), args)
    opts = {}
    if "regress" in tasks:
        if data.shape[1] != 2:
            raise ConfigError("columns", "regress needs exactly two columns")
        opts = {"response": args.response, "predictor": args.predictor, "tolerance_deg": args.tolerance}
    art = run_on_data(Path(args.csv).stem, data, cfg, tasks=tasks, regress_options=opts,
                      output_dir=args.output or "phipursuit-out")
    return _finish(art)


def _finish(art) -> int:
    doc = art.document
    print(f"result: {art.result_file}")
    for g in art.density_grid_files:
        print(f"grid:   {g}")
    print(f"log:    {art.log}")
    p = doc.get("pursuit")
    if p:
        for r in p["reports"]:
            print(f"level {r['level_index']}: statistic {r['statistic']:.4f}  p-value {r['p_value']:.4f}  "
                  f"accept H0: {r['accept_h0']}")
        for i, lv in enumerate(p["model"]["levels"], 1):
            print(f"direction {i}: {np.round(lv['direction'], 4).tolist()}")
    if doc.get("copula"):
        print(f"copula verdict (H0 accepted): {doc['copula']['verdict']}")
    if doc.get("regression"):
        r = doc["regression"]
        print(f"pursuit regression: {r['pursuit_coefficients']}  least squares: {r['least_squares_coefficients']}")
    if not art.ok:
        print(f"numerical failure: {doc['error']}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _emit_grid(args) -> int:
    doc = read_result(args.result)
    if not doc.get("pursuit"):
        raise ConfigError("result", "result file holds no pursuit model")
    model = PursuitModel.from_dict(doc["pursuit"]["model"])
    if args.level is not None:
        if not 0 <= args.level <= model.k:
            raise ConfigError("level", f"must lie in 0..{model.k}")
        model = model.truncated(args.level)
    d = model.d
    axes = tuple(a for a in args.axes if a < d)[:2]
    mean = np.asarray(doc["data"]["mean"], dtype=float)
    sd = np.sqrt(np.diag(np.asarray(doc["data"]["covariance"], dtype=float)))
    mins = args.mins or [float(mean[a] - 3 * sd[a]) for a in axes]
    maxs = args.maxs or [float(mean[a] + 3 * sd[a]) for a in axes]
    counts = args.counts or [41] * len(axes)
    fixed = args.fixed or mean.tolist()
    if len(fixed) != d:
        raise ConfigError("fixed", f"needs {d} values")
    grid = GridSpec(axes, tuple(mins), tuple(maxs), tuple(counts), tuple(fixed))
    out = args.output or str(Path(args.result).with_suffix("")) + ".grid.csv"
    print(emit_density_grid(model, grid, out))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _simulate(args)
        if args.command == "run":
            return _data_run(args, ())
        if args.command == "copula-test":
            return _data_run(args, ("copula",))
        if args.command == "regress":
            return _data_run(args, ("regress",))
        return _emit_grid(args)
    except (ConfigError, ParseError, EmptyData, ParamError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PursuitError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
