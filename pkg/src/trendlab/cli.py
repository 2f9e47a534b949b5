"""Command-line front end.

Subcommands: fit, refine, lambda-max, kkt, simulate, monte-carlo,
reproduce. Every run writes a ``manifest.json`` echoing the effective
parameters plus a short hash of them; JSON artifacts reference that hash.
Report-producing subcommands also render their outputs to PNG figures
unless ``--no-figures`` is given.

Exit codes: 0 success, 1 input error, 2 numeric non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import experiments, plots
from .changepoint import ChangePointReport, extract
from .dual import check_kkt, dual_path
from .refine import PowerLawLambda, RefineConfig, RefinementError, refine
from .signal import (
    GENERATOR_ID,
    CsvFormatError,
    InvalidSpecError,
    generate,
    load_spec_json,
    mean_from_spec,
    read_series_csv,
    save_spec_json,
    write_series_csv,
)
from .solver import SolverConfig, lambda_max, solve

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERIC = 2


def _package_version() -> str:
    try:
        return version("trendlab")
    except PackageNotFoundError:
        return "unknown"


def _write_manifest(out: Path, subcommand: str, params: dict, status: str) -> str:
    canon = json.dumps(params, sort_keys=True, separators=(",", ":"))
    phash = hashlib.sha256(canon.encode()).hexdigest()[:16]
    manifest = {
        "subcommand": subcommand,
        "parameters": params,
        "parameter_hash": phash,
        "status": status,
        "package_version": _package_version(),
        "noise_generator": GENERATOR_ID,
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return phash


def _write_json(path: Path, payload: dict, phash: str) -> None:
    payload = dict(payload)
    payload["manifest_hash"] = phash
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _write_trend_csv(path: Path, m: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,m\n")
        for t, val in enumerate(m, start=1):
            fh.write(f"{t},{val!r}\n")


def _read_trend_csv(path: Path) -> np.ndarray:
    values = []
    with open(path) as fh:
        header = fh.readline().strip().lower()
        if header not in ("t,m", "t,y"):
            raise CsvFormatError(f"{path}: line 1: expected header 't,m', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise CsvFormatError(f"{path}: line {lineno}: expected 2 columns")
            try:
                values.append(float(parts[1]))
            except ValueError as exc:
                raise CsvFormatError(f"{path}: line {lineno}: {exc}") from exc
    return np.asarray(values)


def _solver_config(args, lam: float) -> SolverConfig:
    return SolverConfig(
        lam=lam,
        order=args.order,
        max_iterations=args.max_iter,
        primal_tolerance=args.tol,
        dual_tolerance=args.tol,
    )


def cmd_fit(args) -> int:
    out = Path(args.out)
    series = read_series_csv(args.input)
    params = {
        "input": str(args.input), "lambda": args.lam, "order": args.order,
        "tol": args.tol, "max_iter": args.max_iter,
    }
    est = solve(series, _solver_config(args, args.lam))
    status = "converged" if est.converged else "non_converged"
    phash = _write_manifest(out, "fit", params, status)

    z = dual_path(series, est.m, est.order)
    _write_trend_csv(out / "trend.csv", est.m)
    z.to_csv(out / "dual.csv")
    kkt = check_kkt(series, est.m, args.lam, order=est.order)
    _write_json(out / "kkt.json", {**kkt.to_dict(), "status": status}, phash)

    if est.converged:
        report = extract(est, z, cluster_radius=args.cluster_radius)
        _write_json(out / "changepoints.json", {**report.to_dict(), "status": status}, phash)
        if args.figures:
            fig = plots.fit_figure(series, est, z, report)
            fig.savefig(out / "fit.png", dpi=150)
        print(f"fit: {len(report.points)} change points, "
              f"kkt {'passed' if kkt.passed else 'FAILED'}, "
              f"{est.iterations} iterations")
    else:
        _write_json(out / "changepoints.json",
                    {"points": [], "alternating": True, "staircase_segments": [],
                     "status": status}, phash)
        print(f"fit: did not converge within {args.max_iter} iterations "
              f"(residuals {est.primal_residual:.2e}/{est.dual_residual:.2e})",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if kkt.passed else EXIT_NUMERIC


def cmd_refine(args) -> int:
    out = Path(args.out)
    series = read_series_csv(args.input)
    n = series.n
    if args.lambda0 is not None:
        rule = PowerLawLambda.anchored(n, args.lambda0, args.c)
    else:
        rule = PowerLawLambda(kappa=args.kappa, c=args.c)
    params = {
        "input": str(args.input), "c": args.c, "kappa": rule.kappa,
        "lambda0": rule(n), "min_segment": args.min_segment,
        "tol": args.tol, "max_iter": args.max_iter,
    }
    config = RefineConfig(
        lambda_rule=rule,
        min_segment=args.min_segment,
        solver=_solver_config(args, rule(n)),
    )
    try:
        trace = refine(series, config)
    except RefinementError as exc:
        phash = _write_manifest(out, "refine", params, "non_converged")
        _write_json(out / "trace.json", {**exc.trace.to_dict(), "status": "non_converged"}, phash)
        print(f"refine: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    phash = _write_manifest(out, "refine", params, "converged")
    from .refine import monitor as _monitor
    entries = _monitor(trace, series)
    _write_json(out / "trace.json",
                {**trace.to_dict(), "monitor": [e.to_dict() for e in entries],
                 "status": "converged"}, phash)
    final_report = ChangePointReport(
        points=trace.final_points,
        sign_pattern=[p.sign for p in trace.final_points],
        alternating=True, staircase_segments=[],
    )
    _write_json(out / "final_changepoints.json",
                {**final_report.to_dict(), "status": "converged"}, phash)
    _write_trend_csv(out / "final_trend.csv", trace.final_estimate)
    if args.figures:
        fig = plots.refine_figure(series, trace)
        fig.savefig(out / "refine.png", dpi=150)
    print(f"refine: {len(trace.rounds)} rounds, "
          f"{len(trace.final_points)} final change points at "
          f"{[p.location for p in trace.final_points]}")
    return EXIT_OK


def cmd_lambda_max(args) -> int:
    out = Path(args.out)
    series = read_series_csv(args.input)
    value = lambda_max(series, args.order)
    params = {"input": str(args.input), "order": args.order}
    phash = _write_manifest(out, "lambda-max", params, "ok")
    _write_json(out / "lambda_max.json", {"lambda_max": value, "order": args.order}, phash)
    print(f"{value:.10g}")
    return EXIT_OK


def cmd_kkt(args) -> int:
    out = Path(args.out)
    series = read_series_csv(args.input)
    m = _read_trend_csv(Path(args.trend))
    if m.size != series.n:
        raise CsvFormatError(
            f"{args.trend}: trend has {m.size} samples, series has {series.n}"
        )
    params = {"input": str(args.input), "trend": str(args.trend),
              "lambda": args.lam, "order": args.order}
    report = check_kkt(series, m, args.lam, order=args.order)
    phash = _write_manifest(out, "kkt", params, "passed" if report.passed else "failed")
    _write_json(out / "kkt.json", report.to_dict(), phash)
    z = dual_path(series, m, args.order)
    z.to_csv(out / "dual.csv")
    print(f"kkt: {'passed' if report.passed else 'FAILED'} "
          f"(tube violation {report.max_tube_violation:.3e}, "
          f"boundary {report.boundary_residuals[0]:.3e}/{report.boundary_residuals[1]:.3e})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    out = Path(args.out)
    spec, noise = load_spec_json(args.spec)
    if args.seed is not None:
        from .signal import NoiseConfig
        noise = NoiseConfig(sigma=noise.sigma, seed=args.seed)
    params = {"spec": str(args.spec), "n": spec.n, "sigma": noise.sigma, "seed": noise.seed}
    phash = _write_manifest(out, "simulate", params, "ok")
    series = generate(spec, noise)
    write_series_csv(out / "series.csv", series)
    save_spec_json(out / "truth.json", spec, noise)
    print(f"simulate: wrote {series.n} samples to {out / 'series.csv'}")
    return EXIT_OK


def cmd_monte_carlo(args) -> int:
    out = Path(args.out)
    shapes = {
        "alternating": experiments.ALTERNATING_SHAPE,
        "staircase": experiments.STAIRCASE_SHAPE,
    }
    spec_family = shapes[args.scenario]
    n_list = [int(x) for x in args.n_list.split(",")]
    config = experiments.ScenarioConfig(
        spec_family=spec_family,
        n_list=n_list,
        c=args.c,
        kappa=args.kappa,
        trials=args.trials,
        base_seed=args.seed,
        window_fraction=args.window_fraction,
    )
    params = {
        "scenario": args.scenario, "n_list": n_list, "c": args.c,
        "kappa": args.kappa, "trials": args.trials, "seed": args.seed,
        "window_fraction": args.window_fraction, "refine": args.refine,
    }
    phash = _write_manifest(out, "monte-carlo", params, "ok")
    table = experiments.run_consistency(config, use_refine=args.refine)
    table.to_csv(out / "rates.csv")
    if args.figures:
        fig = plots.rates_figure({args.scenario: table})
        fig.savefig(out / "rates.png", dpi=150)
    for row in table.rows:
        print(f"N={row.n} lambda={row.lam:.4g} exact_rate={row.exact_rate:.3f} "
              f"mean_spurious={row.mean_spurious:.3f} failed={row.failed_trials}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    out = Path(args.out)
    params = {"which": args.which, "seed": args.seed}
    phash = _write_manifest(out, "reproduce", params, "ok")
    bundle = experiments.reproduce_example(args.which, out_dir=out, seed=args.seed)
    if args.figures:
        plots.save_bundle_figures(bundle, out)
    locs = [p.location for p in bundle.report.points]
    msg = f"reproduce example {args.which}: change points {locs}"
    if bundle.trace is not None:
        msg += f"; refined {[p.location for p in bundle.trace.final_points]}"
    print(msg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trendlab",
        description="Piecewise-linear trend filtering with dual diagnostics, "
                    "change-point extraction, and staircase-safe refinement.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, figures=False):
        p.add_argument("--out", default=".", help="output directory")
        if figures:
            p.add_argument("--no-figures", dest="figures", action="store_false",
                           help="skip PNG rendering")

    def add_solver_flags(p):
        p.add_argument("--order", type=int, choices=(1, 2), default=2,
                       help="difference order (2: piecewise linear, 1: piecewise constant)")
        p.add_argument("--tol", type=float, default=1e-8, help="convergence tolerance")
        p.add_argument("--max-iter", dest="max_iter", type=int, default=20000)

    p = sub.add_parser("fit", help="penalized trend fit with full diagnostics")
    p.add_argument("input", help="series CSV with header t,y")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--cluster-radius", dest="cluster_radius", type=int, default=None)
    add_solver_flags(p)
    add_common(p, figures=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("refine", help="iterative refinement of change points")
    p.add_argument("input")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--lambda0", type=float, default=None,
                       help="round-0 penalty; kappa is calibrated from it")
    group.add_argument("--kappa", type=float, default=None)
    p.add_argument("--c", type=float, default=1.3, help="penalty growth exponent")
    p.add_argument("--min-segment", dest="min_segment", type=int, default=20)
    add_solver_flags(p)
    add_common(p, figures=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("lambda-max", help="smallest penalty that fuses all segments")
    p.add_argument("input")
    p.add_argument("--order", type=int, choices=(1, 2), default=2)
    add_common(p)
    p.set_defaults(func=cmd_lambda_max)

    p = sub.add_parser("kkt", help="optimality check of an arbitrary trend candidate")
    p.add_argument("input")
    p.add_argument("--trend", required=True, help="trend CSV with header t,m")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--order", type=int, choices=(1, 2), default=2)
    add_common(p)
    p.set_defaults(func=cmd_kkt)

    p = sub.add_parser("simulate", help="generate a noisy series from a spec JSON")
    p.add_argument("spec", help="spec JSON: {n, knots, sigma, seed}")
    p.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("monte-carlo", help="consistency rate experiment")
    p.add_argument("--scenario", choices=("alternating", "staircase"), required=True)
    p.add_argument("--refine", action="store_true")
    p.add_argument("--n-list", dest="n_list", default="500,2000,8000")
    p.add_argument("--c", type=float, default=experiments.DEFAULT_EXPONENT)
    p.add_argument("--kappa", type=float, default=experiments.DEFAULT_KAPPA)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window-fraction", dest="window_fraction", type=float, default=0.02)
    add_common(p, figures=True)
    p.set_defaults(func=cmd_monte_carlo)

    p = sub.add_parser("reproduce", help="run a bundled example end to end")
    p.add_argument("which", type=int, choices=(1, 2))
    p.add_argument("--seed", type=int, default=experiments.DEFAULT_SEED)
    add_common(p, figures=True)
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "figures"):
        args.figures = False
    try:
        return args.func(args)
    except (CsvFormatError, InvalidSpecError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
