"""Command-line entry point ``mfg``.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 input/output error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, ConvergenceError, MFGError
from .experiment import (
    collect_series,
    emit_plotdata,
    fixed_budget_sweep,
    load_config,
    resolve_ground_truth,
    run_experiment,
    write_population,
)

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4


def _out_dir(args, cfg) -> Path:
    return Path(args.out) if args.out else cfg.output_dir()


def cmd_solve_fpi(args) -> int:
    cfg = load_config(args.config)
    if cfg.algorithm != "fpi":
        cfg = cfg.with_overrides(algorithm="fpi")
    out = _out_dir(args, cfg)
    result = run_experiment(cfg, jobs=args.jobs, out_dir=out)
    print(f"fpi: final mse {result.final_mse!r}, final exploitability {result.final_exploitability!r} -> {out}")
    return EXIT_OK


def cmd_run_qmi(args) -> int:
    cfg = load_config(args.config)
    if not cfg.is_qmi:
        raise ConfigError(f"{args.config}: run-qmi needs algorithm qmi_off or qmi_on")
    out = _out_dir(args, cfg)
    result = run_experiment(cfg, jobs=args.jobs, out_dir=out)
    print(f"{cfg.algorithm}: final mean mse {result.final_mse!r}, "
          f"final mean exploitability {result.final_exploitability!r} -> {out}")
    return EXIT_OK


def cmd_ground_truth(args) -> int:
    cfg = load_config(args.config).with_overrides(**{"ground_truth.mode": "compute"})
    mu_star = resolve_ground_truth(cfg, tol=args.tol)
    out = _out_dir(args, cfg) / "mu_star.csv"
    write_population(mu_star, out)
    print(f"reference population written to {out}")
    return EXIT_OK


def cmd_budget_sweep(args) -> int:
    cfg = load_config(args.config)
    try:
        inner = [int(x) for x in args.inner.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--inner must be a comma-separated list of integers, got {args.inner!r}") from None
    out = _out_dir(args, cfg)
    results = fixed_budget_sweep(cfg, args.total, inner, jobs=args.jobs, out_dir=out)
    for t, res in zip(inner, results):
        print(f"T={t}: final mean mse {res.final_mse!r}")
    return EXIT_OK


def cmd_plot(args) -> int:
    series = collect_series(args.input)
    if not series:
        raise FileNotFoundError(f"no aggregate.csv found under {args.input}")
    written = emit_plotdata(series, Path(args.out) if args.out else Path(args.input), svg=args.svg,
                            log_y=args.log_y)
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfg", description="Tabular mean-field game solvers and experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment TOML file")
        p.add_argument("--out", help="output directory (default: [output] dir of the config)")
        p.add_argument("--jobs", type=int, default=1, help="number of seeds run in parallel")

    p = sub.add_parser("solve-fpi", help="run the model-based fixed-point iteration")
    common(p)
    p.set_defaults(func=cmd_solve_fpi)

    p = sub.add_parser("run-qmi", help="run online QM iteration over all seeds")
    common(p)
    p.set_defaults(func=cmd_run_qmi)

    p = sub.add_parser("ground-truth", help="compute and cache the reference equilibrium")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_ground_truth)

    p = sub.add_parser("budget-sweep", help="fixed total sample budget split into different inner lengths")
    common(p)
    p.add_argument("--total", type=int, default=100_000)
    p.add_argument("--inner", default="500,1000,2000", help="comma-separated inner lengths")
    p.set_defaults(func=cmd_budget_sweep)

    p = sub.add_parser("plot", help="turn aggregate CSVs into long-form plot data and SVG charts")
    p.add_argument("--in", dest="input", required=True, help="directory searched for aggregate.csv files")
    p.add_argument("--out", help="where to write plot files (default: the input directory)")
    p.add_argument("--svg", action="store_true", help="also render SVG line charts")
    p.add_argument("--log-y", action="store_true", help="logarithmic y axis in the SVG charts")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConvergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ConfigError, MFGError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
