"""Command-line front end.

Subcommands: constants, boundaries, solve, simulate, verify, sweep.
Market parameters come from a flat TOML config (--config); outputs land
in --out as CSV or JSON per --format.  Exit codes: 0 success, 2 config
or validation error, 3 numerical failure (no bracket, non-convergence),
4 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, hjb, simulate
from .asymptotics import admissible_margin, solve_boundaries, verify_sub_super
from .model import ParamsError, derive_constants, load_params, validate
from .rootfind import NoBracketError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VERIFY = 4


def _load(args):
    params = load_params(args.config)
    report = validate(params)
    if not report.ok:
        for v in report.violations:
            print(f"invalid config: {v}", file=sys.stderr)
        raise ParamsError("validation failed")
    return params, derive_constants(params)


def _outdir(args):
    out = Path(getattr(args, "out", ".") or ".")
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    try:
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise ParamsError(f"output directory {out} not writable: {exc}")
    return out


def _resolve_margin(spec, lam, params, consts):
    if spec == "exact":
        return consts.M
    if spec == "auto":
        return admissible_margin(lam, params, consts)
    return float(spec)


def cmd_constants(args):
    params = load_params(args.config)
    report = validate(params)
    if not report.ok:
        for v in report.violations:
            print(f"REJECT: {v}")
        return EXIT_CONFIG
    consts = derive_constants(params)
    for name in ("theta", "A", "gamma2", "nu", "B", "M"):
        print(f"{name} = {getattr(consts, name):.15g}")
    return EXIT_OK


def cmd_boundaries(args):
    params, consts = _load(args)
    out = _outdir(args)
    margin = _resolve_margin(args.margin, params.lam, params, consts)
    bset = solve_boundaries(args.sign, params.lam, params, consts, n_times=args.times, margin=margin)
    path = out / f"boundaries_{'plus' if bset.sign > 0 else 'minus'}"
    if args.format == "csv":
        bset.to_csv(f"{path}.csv")
        print(f"wrote {path}.csv ({args.times} rows)")
    else:
        bset.to_json(f"{path}.json")
        print(f"wrote {path}.json")
    print(f"max residuals: {bset.residual1.max():.3e} {bset.residual2.max():.3e} (margin {margin:g})")
    return EXIT_OK


def cmd_solve(args):
    params, consts = _load(args)
    out = _outdir(args)
    scheme = {"explicit": "explicit-projected", "penalty": "implicit-penalty"}[args.scheme]
    if args.nz and args.z_min is not None and args.z_max is not None:
        grid = hjb.GridSpec(z_min=args.z_min, z_max=args.z_max, nz=args.nz, nt=args.nt, scheme=scheme)
    else:
        grid = hjb.default_grid(params, consts, nt=args.nt, scheme=scheme)
    sol = hjb.solve(params, consts, grid)
    sol.save(out / "solution")
    j = int(np.argmin(np.abs(sol.z - consts.theta)))
    print(f"wrote {out}/solution.json and {out}/solution.csv")
    print(f"u(t0, theta) = {sol.values[0, j]:.10g}")
    return EXIT_OK


def cmd_simulate(args):
    params, consts = _load(args)
    out = _outdir(args)
    cfg = simulate.PathConfig(
        n_paths=args.paths,
        dt=args.dt,
        seed=args.seed,
        initial=(params.t0, args.x, args.y if args.y is not None else consts.theta),
        antithetic=args.antithetic,
    )
    if args.strategy == "merton":
        res = simulate.simulate_merton(params, cfg)
    else:
        margin = _resolve_margin(args.margin, params.lam, params, consts)
        bset = solve_boundaries(-1, params.lam, params, consts, margin=margin)
        res = simulate.simulate_reflected(params, consts, bset, cfg)
    payload = res.as_dict(lam=params.lam)
    if args.format == "csv":
        import csv as _csv

        with open(out / "simulation.csv", "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["lambda", "estimate", "std_error", "trade_volume", "boundary_hits", "ruin_count"])
            w.writerow([params.lam, res.estimate, res.std_error, res.trade_volume, res.boundary_hits, res.ruin_count])
        print(f"wrote {out}/simulation.csv")
    else:
        with open(out / "simulation.json", "w") as fh:
            json.dump(payload, fh, indent=2)
        print(f"wrote {out}/simulation.json")
    print(f"estimate = {res.estimate:.8g} +/- {res.std_error:.3g} (n={res.n_paths})")
    return EXIT_OK


def cmd_verify(args):
    params, consts = _load(args)
    out = _outdir(args)
    margin = _resolve_margin(args.margin, params.lam, params, consts)
    report = verify_sub_super(params, consts, nt=args.nt, nz=args.nz, margin=margin)
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  worst={c.worst_margin:+.3e}")
    if report.error:
        print(f"note: {report.error}")
    if args.format == "csv":
        report.to_csv(out / "verify.csv")
    else:
        report.to_json(out / "verify.json")
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_sweep(args):
    params, consts = _load(args)
    out = _outdir(args)
    lambdas = [float(s) for s in args.lambdas.split(",") if s]
    if any(not 0.0 < l < 1.0 for l in lambdas):
        raise ParamsError("lambda values must lie in (0, 1)")
    report = analysis.expansion_study(params, lambdas, nt=args.nt)
    if len(lambdas) < 4:
        print("insufficient points for a slope fit (need >= 4)")
        report.fit = None
    report.to_json(out / "sweep.json")
    report.to_csv(out / "sweep.csv")
    report.plot_data(out / "sweep_plot.csv")
    print(f"wrote {out}/sweep.json, {out}/sweep.csv, {out}/sweep_plot.csv")
    failed = False
    if report.fit is not None:
        print(f"slope = {report.fit.slope:.4f} +/- {report.fit.ci_halfwidth:.4f} (R^2 = {report.fit.r2:.4f})")
        if report.fit.flagged:
            print("FLAG: fit R^2 below 0.98")
    if args.sandwich:
        passes, margins, details = analysis.sandwich_study(params, lambdas, nt=args.nt)
        for d in details:
            tag = "PASS" if (d["upper_minus_u"] >= -d["tolerance"] and d["u_minus_lower"] >= -d["tolerance"]) else "FAIL"
            print(
                f"{tag}  sandwich lambda={d['lambda']:g}: upper-u={d['upper_minus_u']:+.3e} "
                f"u-lower={d['u_minus_lower']:+.3e} tol={d['tolerance']:.1e}"
            )
        failed = not all(passes)
        with open(out / "sandwich.json", "w") as fh:
            json.dump(details, fh, indent=2)
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="tcband", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", required=True, help="flat TOML parameter file")
        if out:
            p.add_argument("--out", default=".", help="output directory")
            p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("constants", help="print derived constants")
    common(p, out=False)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("boundaries", help="solve band edges on a time grid")
    common(p)
    p.add_argument("--times", type=int, default=2048)
    p.add_argument("--sign", choices=("+", "-"), default="-")
    p.add_argument("--margin", default="exact", help="'exact', 'auto', or a number")
    p.set_defaults(func=cmd_boundaries)

    p = sub.add_parser("solve", help="reference PDE solve")
    common(p)
    p.add_argument("--scheme", choices=("explicit", "penalty"), default="explicit")
    p.add_argument("--nt", type=int, default=32)
    p.add_argument("--nz", type=int, default=0)
    p.add_argument("--z-min", type=float, default=None)
    p.add_argument("--z-max", type=float, default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="Monte Carlo of a trading strategy")
    common(p)
    p.add_argument("--strategy", choices=("reflected", "merton"), default="reflected")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--x", type=float, default=0.5)
    p.add_argument("--y", type=float, default=None, help="default: theta (unit wealth)")
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--margin", default="auto")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="grid certification of the bounding surfaces")
    common(p)
    p.add_argument("--nt", type=int, default=500)
    p.add_argument("--nz", type=int, default=500)
    p.add_argument("--margin", default="auto")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="expansion study across lambda values")
    common(p)
    p.add_argument("--lambdas", required=True, help="comma-separated list")
    p.add_argument("--nt", type=int, default=32)
    p.add_argument("--sandwich", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ParamsError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoBracketError, hjb.SolverError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
