"""Command-line interface: ``vmfkde <subcommand> [flags]``.

Exit status is 0 on success, 1 on a usage error and 2 on invalid or missing
data. Numeric output is CSV or JSON, written to ``--output`` or stdout;
progress messages go to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import asymptotics_table
from .cv import GramCache, cv_curve
from .experiments import (ExperimentConfig, load_config, preset, run_density_error_experiment,
                          run_rate_experiment, write_errors_csv)
from .kde import KdeModel, evaluate_batch
from .optimize import select_ami, select_cv, select_emi, select_ise_oracle, select_mise_oracle
from .risk import IseEvaluator, amise, build_risk_evaluator
from .sphere import DataError, load_sample_csv, sample_uniform
from .vmf import curvature_functional, load_mixture_config

SUBCOMMANDS = ("density", "fit-bandwidth", "cv-curve", "mise-curve", "ise-compare",
               "asymptotics", "rates", "errors")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    g.add_argument("--threads", type=_positive_int, default=None,
                   help="worker processes for Monte Carlo replicates (default 1)")
    g.add_argument("--output", type=Path, default=None,
                   help="output file (directory for 'rates'); default stdout")
    return p


def _truth_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mixture-config", type=Path, default=None,
                   help="TOML/JSON file with the true mixture (fields d, mu, kappa, p)")
    p.add_argument("--preset", choices=("vmf", "mvmf"), default="vmf",
                   help="truth preset when no mixture config is given (default vmf)")
    p.add_argument("--d", type=_positive_int, default=2, help="sphere dimension for --preset (default 2)")
    p.add_argument("--kappa", type=float, default=5.0, help="concentration for --preset (default 5)")


def _grid_args(p: argparse.ArgumentParser, hmin: float, hmax: float) -> None:
    p.add_argument("--hmin", type=_positive_float, default=hmin, help=f"smallest bandwidth (default {hmin})")
    p.add_argument("--hmax", type=_positive_float, default=hmax, help=f"largest bandwidth (default {hmax})")
    p.add_argument("--num", type=_positive_int, default=50, help="number of bandwidths (default 50)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="vmfkde", description="Kernel density estimation and bandwidth "
                     "selection on the sphere with the von Mises-Fisher kernel.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("density", parents=[common], help="evaluate the KDE on a grid")
    p.add_argument("--data", type=Path, required=True, help="sample CSV with header x0,...,xd")
    p.add_argument("--h", type=_positive_float, required=True, help="bandwidth")
    p.add_argument("--grid", type=_positive_int, default=100,
                   help="number of evaluation points (default 100)")

    p = sub.add_parser("fit-bandwidth", parents=[common], help="select a bandwidth from data")
    p.add_argument("--method", choices=("cv", "ami", "emi"), default="cv", help="selector (default cv)")
    p.add_argument("--data", type=Path, required=True, help="sample CSV with header x0,...,xd")
    p.add_argument("--mixture", type=_positive_int, default=1,
                   help="number of plug-in mixture components for ami/emi (default 1)")
    p.add_argument("--B", type=_positive_int, default=10_000, help="importance draws (default 10000)")

    p = sub.add_parser("cv-curve", parents=[common], help="exact CV loss over a bandwidth grid")
    p.add_argument("--data", type=Path, required=True, help="sample CSV with header x0,...,xd")
    _grid_args(p, 0.05, 1.0)

    p = sub.add_parser("mise-curve", parents=[common], help="exact MISE and AMISE over a grid")
    _truth_args(p)
    p.add_argument("--n", type=_positive_int, required=True, help="sample size")
    p.add_argument("--B", type=_positive_int, default=10_000, help="importance draws (default 10000)")
    _grid_args(p, 0.05, 1.0)

    p = sub.add_parser("ise-compare", parents=[common], help="ISE of CV, AMI, EMI and the ISE oracle")
    p.add_argument("--data", type=Path, required=True, help="sample CSV with header x0,...,xd")
    _truth_args(p)
    p.add_argument("--mixture", type=_positive_int, default=1,
                   help="number of plug-in mixture components (default 1)")
    p.add_argument("--B", type=_positive_int, default=10_000, help="importance draws (default 10000)")

    p = sub.add_parser("asymptotics", parents=[common], help="asymptotic constants per dimension")
    p.add_argument("--kappa", type=_positive_float, default=10.0, help="vMF concentration (default 10)")
    p.add_argument("--dmax", type=_positive_int, default=200, help="largest dimension (default 200)")

    p = sub.add_parser("rates", parents=[common], help="run the selector rate experiment")
    p.add_argument("--config", type=Path, required=True, help="experiment TOML/JSON")

    p = sub.add_parser("errors", parents=[common],
                       help="run the L2 density-error experiment (the ISE oracle is always included)")
    p.add_argument("--config", type=Path, required=True, help="experiment TOML/JSON")
    return parser


# ---------------------------------------------------------------- helpers

def _emit(text: str, output: Path | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        output.write_text(text)


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in r)
              for r in rows]
    return "\n".join(lines) + "\n"


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _truth(args):
    if args.mixture_config is not None:
        return load_mixture_config(args.mixture_config)
    return preset(args.preset, args.d, args.kappa)


def _grid_points(d: int, m: int, rng) -> np.ndarray:
    """m evaluation points: equispaced on S^1, a Fibonacci lattice on S^2, uniform draws above."""
    if d == 1:
        a = 2.0 * np.pi * np.arange(m) / m
        return np.column_stack([np.cos(a), np.sin(a)])
    if d == 2:
        k = np.arange(m) + 0.5
        z = 1.0 - 2.0 * k / m
        phi = np.pi * (1.0 + 5.0 ** 0.5) * k
        r = np.sqrt(1.0 - z * z)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return sample_uniform(d, m, rng).points


def _h_grid(args) -> np.ndarray:
    if args.hmax < args.hmin:
        raise UsageError("--hmax must be >= --hmin")
    return np.geomspace(args.hmin, args.hmax, args.num)


def _jsonable(res) -> dict:
    out = res.to_dict()
    return {k: v for k, v in out.items() if isinstance(v, (int, float, str, bool, dict, type(None)))}


# ---------------------------------------------------------------- commands

def cmd_density(args) -> None:
    smp = load_sample_csv(args.data)
    model = KdeModel(smp, args.h)
    pts = _grid_points(smp.d, args.grid, np.random.default_rng(args.seed))
    dens = evaluate_batch(model, pts)
    header = [f"x{i}" for i in range(smp.d + 1)] + ["density"]
    _emit(_csv(header, [[*p, f] for p, f in zip(pts, dens)]), args.output)


def cmd_fit_bandwidth(args) -> None:
    smp = load_sample_csv(args.data)
    rng = np.random.default_rng(args.seed)
    if args.method == "cv":
        res = select_cv(smp)
    elif args.method == "ami":
        res = select_ami(smp, args.mixture, rng=rng, B=args.B)
    else:
        res = select_emi(smp, args.mixture, rng=rng, B=args.B)
    out = _jsonable(res)
    if res.trace is not None:
        out["trace"]["grid"] = res.trace.grid.tolist()
        out["trace"]["values"] = res.trace.values.tolist()
    _emit(json.dumps(out, indent=2) + "\n", args.output)


def cmd_cv_curve(args) -> None:
    smp = load_sample_csv(args.data)
    hs = _h_grid(args)
    vals = cv_curve(GramCache.from_sample(smp), smp.d, hs)
    _emit(_csv(["h", "cv"], zip(hs, vals)), args.output)


def cmd_mise_curve(args) -> None:
    truth = _truth(args)
    rng = np.random.default_rng(args.seed)
    ev = build_risk_evaluator(truth, args.n, args.B, rng)
    curv = curvature_functional(truth, B=args.B, rng=rng)
    hs = _h_grid(args)
    rows = [(h, ev.mise(h), amise(truth.d, args.n, curv, h)) for h in hs]
    _emit(_csv(["h", "mise", "amise"], rows), args.output)


def cmd_ise_compare(args) -> None:
    smp = load_sample_csv(args.data)
    truth = _truth(args)
    if truth.d != smp.d:
        raise DataError(f"truth has d={truth.d} but the data has d={smp.d}")
    rng = np.random.default_rng(args.seed)
    ise = IseEvaluator(smp.points, truth, B=args.B, rng=rng)
    results = {
        "CV": select_cv(smp),
        "AMI": select_ami(smp, args.mixture, rng=rng, B=args.B),
        "EMI": select_emi(smp, args.mixture, rng=rng, B=args.B),
        "ISE": select_ise_oracle(smp, truth, B=args.B, rng=rng, evaluator=ise),
        "MISE": select_mise_oracle(truth, smp.n, B=args.B, rng=rng),
    }
    out = {}
    for name, res in results.items():
        h = res.h
        out[name] = {"h": None if math.isinf(h) else h, "h_is_infinite": math.isinf(h),
                     "ise": ise(h), "boundary_flag": res.boundary_flag}
    _emit(json.dumps(out, indent=2) + "\n", args.output)


def cmd_asymptotics(args) -> None:
    rows = asymptotics_table(args.kappa, args.dmax)
    header = ["d", "tau", "rho", "sigma2", "beta_cv", "beta_ami", "beta_emi", "rho_gauss"]
    _emit(_csv(header, [[r[k] for k in header] for r in rows]), args.output)


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed_given:
        cfg.seed = args.seed
    if args.threads_given:
        cfg.threads = args.threads
    return cfg


def cmd_rates(args) -> None:
    cfg = _experiment_config(args)
    res = run_rate_experiment(cfg, progress=_progress)
    if args.output is None:
        sys.stdout.write(res.cells_csv() + "\n" + res.fits_csv())
        return
    args.output.mkdir(parents=True, exist_ok=True)
    (args.output / "cells.csv").write_text(res.cells_csv())
    (args.output / "fits.csv").write_text(res.fits_csv())


def cmd_errors(args) -> None:
    cfg = _experiment_config(args)
    if "ISE" not in cfg.selectors:
        cfg.selectors = (*cfg.selectors, "ISE")
    rows = run_density_error_experiment(cfg, progress=_progress)
    out = args.output
    if out is not None and out.is_dir():
        out = out / "errors.csv"
    _emit(write_errors_csv(rows), out)


COMMANDS = {
    "density": cmd_density, "fit-bandwidth": cmd_fit_bandwidth, "cv-curve": cmd_cv_curve,
    "mise-curve": cmd_mise_curve, "ise-compare": cmd_ise_compare, "asymptotics": cmd_asymptotics,
    "rates": cmd_rates, "errors": cmd_errors,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.seed_given, args.threads_given = args.seed is not None, args.threads is not None
        args.seed = 0 if args.seed is None else args.seed
        args.threads = 1 if args.threads is None else args.threads
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"vmfkde: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"vmfkde: invalid input: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
