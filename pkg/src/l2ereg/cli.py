"""Command-line interface: ``l2ereg {fit,simulate,benchmark,path,rerun}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Outputs go to ``--out-dir`` (default: ``$L2EREG_OUTPUT_DIR`` or the current
directory) under fixed file names, each with a ``manifest.json`` describing
the run.
"""
import argparse
import datetime
import hashlib
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .baselines import solution_path
from .data import (
    SimulationSpec,
    coefficients_to_original,
    load_csv,
    simulate,
    standardize,
    to_identity_design,
    write_csv,
)
from .errors import (
    DataError,
    IncompatibleConstraintError,
    InvalidInputError,
    L2EError,
    NumericalFailureError,
    SingularDesignError,
    UnsupportedConstraintError,
)
from .experiments import SHAPE_SETUPS, benchmark_csv, run_benchmark
from .prox import ConstraintSpec
from .solver import FitConfig, fit

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUTPUT_ENV = "L2EREG_OUTPUT_DIR"

FIT_JSON = "fit.json"
RESIDUALS_CSV = "residuals.csv"
DATASET_CSV = "dataset.csv"
TRUTH_JSON = "truth.json"
BENCHMARK_CSV = "benchmark.csv"
PATH_CSV = "path.csv"
MANIFEST_JSON = "manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _step(text):
    if text == "auto":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"step must be 'auto' or a number, got {text!r}") from None
    return v


def _add_solver_args(p):
    g = p.add_argument_group("solver")
    g.add_argument("--n-beta", type=int, default=5)
    g.add_argument("--n-tau", type=int, default=5)
    g.add_argument("--tau-min", type=float, default=1e-2)
    g.add_argument("--tau-max", type=float, default=1e2)
    g.add_argument("--max-iter", type=int, default=500)
    g.add_argument("--tol", type=float, default=1e-8)
    g.add_argument("--step-beta", type=_step, default="auto")
    g.add_argument("--step-tau", type=_step, default="auto")
    g.add_argument("--init", choices=("ols", "zero"), default="ols")
    g.add_argument("--outlier-threshold", type=float, default=FitConfig().outlier_weight_threshold)
    g.add_argument("--seed", type=int, default=0)


def _add_sim_args(p, generators, default_generator):
    g = p.add_argument_group("simulation")
    g.add_argument("--generator", choices=generators, default=default_generator)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--magnitude", type=float, default=10.0, help="outlier size in noise SDs")
    g.add_argument("--tau-star", type=float, default=None, help="true noise precision")


def build_parser():
    parser = _Parser(prog="l2ereg", description="Robust structured regression with the L2 criterion.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def out_dir(p):
        p.add_argument("--out-dir", default=None, help=f"output directory (default ${OUTPUT_ENV} or .)")

    p = sub.add_parser("fit", help="fit an L2E model to a CSV file")
    p.add_argument("--input", required=True)
    p.add_argument("--response", default="-1", help="response column name or index (default: last)")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--constraint", default="none", help="none, l1:LAMBDA, l1ball:RADIUS, isotonic or convex")
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--residuals", action="store_true", help=f"also write {RESIDUALS_CSV}")
    p.add_argument("--verbose", action="store_true", help="one line per outer iteration on stderr")
    _add_solver_args(p)
    out_dir(p)

    p = sub.add_parser("simulate", help="draw a synthetic dataset")
    _add_sim_args(p, ("cubic", "quartic", "linear"), "cubic")
    p.add_argument("--outliers", type=int, default=0)
    p.add_argument("--side", choices=("response", "design", "both"), default="response")
    p.add_argument("--p", type=int, default=8)
    p.add_argument("--beta-star", type=_float_list, default=None)
    p.add_argument("--seed", type=int, default=0)
    out_dir(p)

    p = sub.add_parser("benchmark", help="Monte Carlo MSE of L2E vs least squares")
    _add_sim_args(p, tuple(SHAPE_SETUPS), "cubic")
    p.add_argument("--levels", type=_int_list, default=[10, 50, 100, 200])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--workers", type=int, default=1)
    _add_solver_args(p)
    out_dir(p)

    p = sub.add_parser("path", help="lasso and L2E solution paths")
    p.add_argument("--input", default=None, help="CSV file; simulate linear data when omitted")
    p.add_argument("--response", default="-1")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--grid", type=int, default=50)
    p.add_argument("--no-standardize", action="store_true")
    _add_sim_args(p, ("linear",), "linear")
    p.add_argument("--p", type=int, default=8)
    p.add_argument("--outliers", type=int, default=0)
    p.add_argument("--side", choices=("response", "design", "both"), default="response")
    p.add_argument("--beta-star", type=_float_list, default=None)
    p.add_argument("--sim-seed", type=int, default=0)
    _add_solver_args(p)
    out_dir(p)

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    out_dir(p)
    return parser


def _fit_config(args):
    return FitConfig(
        n_beta=args.n_beta,
        n_tau=args.n_tau,
        tau_min=args.tau_min,
        tau_max=args.tau_max,
        max_outer_iter=args.max_iter,
        tol=args.tol,
        step_beta=args.step_beta,
        step_tau=args.step_tau,
        init=args.init,
        outlier_weight_threshold=args.outlier_threshold,
        seed=args.seed,
    )


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_out_dir(args):
    d = args.out_dir or os.environ.get(OUTPUT_ENV) or "."
    os.makedirs(d, exist_ok=True)
    return d


def make_manifest(command, args, seed):
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "out_dir")}
    inputs = {}
    if getattr(args, "input", None):
        config["input"] = os.path.abspath(args.input)
        inputs[config["input"]] = _sha256(args.input)
    return {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "inputs": inputs,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out, manifest):
    _write_json(os.path.join(out, MANIFEST_JSON), manifest)


def _load(args):
    return load_csv(args.input, response_column=args.response, header=not args.no_header)


def cmd_fit(args):
    try:
        spec = ConstraintSpec.parse(args.constraint)
    except (UnsupportedConstraintError, InvalidInputError) as exc:
        raise UsageError(str(exc)) from None
    cfg = _fit_config(args)
    ds = _load(args)
    if spec.is_shape:
        try:
            ds = to_identity_design(ds)
        except InvalidInputError as exc:
            raise IncompatibleConstraintError(f"{spec.kind} constraint: {exc}") from None
        work = ds
    else:
        work = ds if args.no_standardize else standardize(ds)
        if spec.kind == "none" and not args.no_standardize:
            # estimate the intercept robustly instead of trusting the mean of y
            work = replace(work, X=np.column_stack([np.ones(work.n), work.X]))
    out = _resolve_out_dir(args)

    callback = None
    if args.verbose:
        def callback(k, obj, theta):
            print(f"iter {k:5d}  objective {obj:.12g}  tau {theta.tau:.6g}", file=sys.stderr)

    res = fit(work, spec, cfg, callback=callback)
    manifest = make_manifest("fit", args, cfg.seed)
    doc = fit_document(ds, work, spec, res, manifest)
    _write_json(os.path.join(out, FIT_JSON), doc)
    _write_manifest(out, manifest)
    if args.residuals:
        fitted = np.array(doc["fitted"])
        with open(os.path.join(out, RESIDUALS_CSV), "w", encoding="utf-8") as fh:
            fh.write("fitted,residual,weight,outlier\n")
            for f, r, w, o in zip(fitted, ds.y - fitted, res.weights, res.outlier_flags):
                fh.write(f"{f:.17g},{r:.17g},{w:.17g},{int(o)}\n")
    return EXIT_OK


def fit_document(ds, work, spec, res, manifest):
    """JSON-ready fit output on the original data scale."""
    if spec.is_shape:
        intercept, coefs = 0.0, np.array(res.beta)
        fitted = np.array(res.fitted)
        names = [f"t={t:.17g}" for t in ds.sites]
    else:
        beta = np.array(res.beta)
        offset = 0.0
        if beta.size == ds.p + 1:
            offset, beta = beta[0], beta[1:]
        intercept, coefs = coefficients_to_original(work, beta)
        intercept += offset * (work.y_scale if work.standardized else 1.0)
        fitted = ds.X @ coefs + intercept
        names = ds.names()
    tau = res.tau / work.y_scale if work.standardized else res.tau
    return {
        "constraint": spec.label(),
        "standardized": bool(work.standardized),
        "n": int(ds.n),
        "p": int(ds.p),
        "intercept": float(intercept),
        "coefficient_names": names,
        "coefficients": [float(c) for c in coefs],
        "tau": float(tau),
        "fitted": [float(v) for v in fitted],
        "weights": [float(w) for w in res.weights],
        "outlier_flags": [bool(f) for f in res.outlier_flags],
        "outlier_indices": [int(i) for i in np.nonzero(res.outlier_flags)[0]],
        "objective_trace": [float(v) for v in res.objective_trace],
        "converged": bool(res.converged),
        "outer_iterations": int(res.outer_iterations),
        "step_halvings": int(res.step_halvings),
        "warnings": list(res.warnings),
        "manifest": manifest,
    }


def _sim_spec(args, generator, n_outliers, seed):
    try:
        return SimulationSpec(
            generator=generator,
            n=args.n,
            n_outliers=n_outliers,
            outlier_magnitude=args.magnitude,
            outlier_side=getattr(args, "side", "response"),
            seed=seed,
            p=getattr(args, "p", 8),
            beta_star=tuple(args.beta_star) if getattr(args, "beta_star", None) else None,
            tau_star=args.tau_star,
        )
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args):
    spec = _sim_spec(args, args.generator, args.outliers, args.seed)
    ds, truth = simulate(spec)
    out = _resolve_out_dir(args)
    write_csv(ds, os.path.join(out, DATASET_CSV))
    doc = truth.as_dict()
    doc["spec"] = spec.as_dict()
    _write_json(os.path.join(out, TRUTH_JSON), doc)
    _write_manifest(out, make_manifest("simulate", args, args.seed))
    return EXIT_OK


def cmd_benchmark(args):
    if args.trials < 1 or not args.levels or args.workers < 1:
        raise UsageError("benchmark needs trials >= 1, workers >= 1 and at least one outlier level")
    for lvl in args.levels:
        _sim_spec(args, args.generator, lvl, args.seed)
    cfg = _fit_config(args)
    rows = run_benchmark(
        args.generator, args.n, args.levels, args.trials, args.seed,
        magnitude=args.magnitude, cfg=cfg, workers=args.workers,
    )
    out = _resolve_out_dir(args)
    with open(os.path.join(out, BENCHMARK_CSV), "w", encoding="utf-8", newline="") as fh:
        fh.write(benchmark_csv(rows))
    _write_manifest(out, make_manifest("benchmark", args, args.seed))
    return EXIT_OK


def cmd_path(args):
    if args.grid < 2:
        raise UsageError("--grid must be at least 2")
    cfg = _fit_config(args)
    if args.input:
        ds = _load(args)
    else:
        ds, _ = simulate(_sim_spec(args, "linear", args.outliers, args.sim_seed))
    work = ds if args.no_standardize else standardize(ds, scale_y=True)
    out = _resolve_out_dir(args)
    lines = ["estimator,s,coefficient_index,value"]
    for tag in ("lasso_mle", "l2e_sparse"):
        for est, s, j, v in solution_path(work, tag, args.grid, cfg).rows():
            lines.append(f"{est},{s:.17g},{j},{v:.17g}")
    with open(os.path.join(out, PATH_CSV), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    _write_manifest(out, make_manifest("path", args, args.seed))
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "benchmark": cmd_benchmark, "path": cmd_path}


def cmd_rerun(args):
    try:
        with open(args.manifest, encoding="utf-8") as fh:
            manifest = json.load(fh)
        command = manifest["command"]
        config = dict(manifest["config"])
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read manifest {args.manifest}: {exc}") from None
    if command not in COMMANDS or command == "rerun":
        raise DataError(f"manifest names unknown command {command!r}")
    for path, digest in manifest.get("inputs", {}).items():
        if not os.path.isfile(path) or _sha256(path) != digest:
            raise DataError(f"input {path} is missing or differs from the manifest digest")
    ns = argparse.Namespace(command=command, out_dir=args.out_dir, **config)
    return COMMANDS[command](ns)


COMMANDS["rerun"] = cmd_rerun


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, IncompatibleConstraintError, SingularDesignError, InvalidInputError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except L2EError as exc:
        if isinstance(exc.__cause__, NumericalFailureError):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
