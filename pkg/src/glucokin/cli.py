"""Command-line front end: ``glucokin <command> [flags]``.

Time-valued flags (``--step``, ``--delta``, ``--split``) take days, or a
number with a unit suffix such as ``3.5h`` or ``210min``.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from glucokin import io as gio
from glucokin.estimation import OPTIMIZERS, fit, fit_predict_split, generate_synthetic
from glucokin.identifiability import (
    GROUP_CUTOFF,
    SV_GAP,
    SV_THRESHOLD,
    GridSpec,
    build_theta_ensemble,
    jacobi_nullspace_check,
    profile_all,
    relative_intervals,
    structural_analysis,
)
from glucokin.models import Family, ModelError, ModelSpec, ParamVector, published_params, published_pigs
from glucokin.protocols import complete_scenario, reduced_scenario
from glucokin.sensitivity import DEFAULT_DELTA
from glucokin.solver import DEFAULT_STEP, DivergenceError, ScheduleError, integrate

COMMANDS = ("simulate", "generate", "fit", "profile", "svd", "jacobi", "predict")
_UNITS = {"min": 1440.0, "h": 24.0, "d": 1.0}
JACOBI_POINT = (8.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)


class UsageError(Exception):
    """Bad flag combination detected after parsing (exit code 2)."""


def parse_time(text: str) -> float:
    """``"3.5h"`` -> 0.1458... d; bare numbers are days."""
    s = text.strip().lower()
    for unit in ("min", "h", "d"):
        if s.endswith(unit):
            number = s[: -len(unit)]
            break
    else:
        unit, number = "d", s
    try:
        v = float(number)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid time {text!r}") from None
    if not math.isfinite(v) or v <= 0:
        raise argparse.ArgumentTypeError(f"time must be positive, got {text!r}")
    return v / _UNITS[unit]


def _percent(text: str) -> float:
    v = float(text)
    if not 0 < v < 100:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 100)")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", choices=[f.value for f in Family],
                        help="model family (default: from --params or the experiment file)")
    common.add_argument("--experiment", type=Path, help="sectioned experiment file")
    common.add_argument("--params", type=Path, help="parameter JSON (family, params, constants)")
    common.add_argument("--optimizer", choices=OPTIMIZERS, default="nelder-mead")
    common.add_argument("--step", type=parse_time, default=DEFAULT_STEP,
                        help=f"integration step (default {DEFAULT_STEP} d)")
    common.add_argument("--delta", type=parse_time, default=DEFAULT_DELTA,
                        help=f"sensitivity row spacing (default {DEFAULT_DELTA} d)")
    common.add_argument("--alpha", type=_percent, default=96.0,
                        help="profile threshold percentile (default 96)")
    common.add_argument("--split", type=parse_time, help="calibration cut-off for predict")
    common.add_argument("--seed", type=int, default=0, help="noise seed for generate")
    common.add_argument("--sigma", type=float, help="noise standard deviation for generate")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--grid-points", type=int, default=41)
    common.add_argument("--grid-span", type=float, default=10.0)
    common.add_argument("--sv-threshold", type=float, default=SV_THRESHOLD)
    common.add_argument("--sv-gap", type=float, default=SV_GAP)

    parser = argparse.ArgumentParser(
        prog="glucokin",
        description="Simulate, calibrate and analyze bihormonal glucose models.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "simulate": "integrate a parameter set over an experiment's schedule",
        "generate": "write a synthetic experiment file with Gaussian glucose noise",
        "fit": "calibrate parameters against an experiment",
        "profile": "profile likelihoods of every parameter",
        "svd": "sensitivity-matrix SVD over a parameter ensemble",
        "jacobi": "null-space check of the Lie-derivative Jacobi matrix",
        "predict": "fit up to --split and score the remainder",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
    return parser


# ---------------------------------------------------------------- helpers

def _load_dataset(args):
    if args.experiment is None:
        return None
    if not args.experiment.is_file():
        raise UsageError(f"experiment file not found: {args.experiment}")
    return gio.load_experiment(args.experiment)


def _experiment_family(path: Path | None) -> Family | None:
    if path is None or not path.is_file():
        return None
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line.startswith("model_family") and "=" in line:
            return Family.parse(line.split("=", 1)[1].strip())
    return None


def _params(args, required: bool = False) -> ParamVector:
    """Parameters from ``--params`` or the first published set of the family."""
    family = Family.parse(args.model) if args.model else None
    if args.params is not None:
        if not args.params.is_file():
            raise UsageError(f"parameter file not found: {args.params}")
        theta = gio.load_params(args.params)
        if family is not None and theta.model.family is not family:
            raise UsageError(
                f"--model {family.value} disagrees with the {theta.model.family.value} "
                "parameters in --params")
        return theta
    if required:
        raise UsageError(f"{args.command} needs --params")
    family = family or _experiment_family(args.experiment)
    if family is None:
        raise UsageError("give --model, --params or an experiment file with model_family")
    if family is Family.RESCALED_COMPLETE:
        raise UsageError("the rescaled complete model has no published values; give --params")
    return published_params(family, published_pigs(family)[0])


def _cost_kind(spec: ModelSpec, dataset) -> str:
    if spec.family is Family.INSULIN_SUB and dataset.insulin is not None:
        return "insulin_joint"
    if spec.family is Family.GLUCAGON_SUB and dataset.glucagon is not None:
        return "glucagon_joint"
    return "glucose"


def _check_x0(spec: ModelSpec, dataset):
    if dataset.x0.size != spec.state_dim:
        raise UsageError(
            f"the experiment's initial state has {dataset.x0.size} entries; the "
            f"{spec.family.value} model needs {spec.state_dim}")


def _write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


def _need_experiment(args):
    ds = _load_dataset(args)
    if ds is None:
        raise UsageError(f"{args.command} needs --experiment")
    return ds


# --------------------------------------------------------------- commands

def cmd_simulate(args) -> list:
    theta = _params(args)
    ds = _need_experiment(args)
    _check_x0(theta.model, ds)
    traj = integrate(None, theta, ds.x0, ds.schedule, args.step)
    return [gio.save_results(args.out / "trajectory.csv", traj)]


def cmd_generate(args) -> list:
    theta = _params(args)
    spec = theta.model
    if args.experiment is not None:
        template = _need_experiment(args)
        _check_x0(spec, template)
        x0, schedule, times = template.x0, template.schedule, template.glucose[:, 0]
        sigma = 0.5 if args.sigma is None else args.sigma
    elif spec.family in (Family.REDUCED, Family.COMPLETE) and args.params is None:
        sc = reduced_scenario(1) if spec.family is Family.REDUCED else complete_scenario(1)
        theta, x0, schedule, times = sc.params, sc.x0, sc.schedule, sc.sample_times
        sigma = sc.sigma if args.sigma is None else args.sigma
    else:
        raise UsageError("generate needs --experiment as a protocol template "
                         "unless it runs a built-in reduced or complete scenario")
    if sigma < 0:
        raise UsageError("--sigma must be >= 0")
    ds = generate_synthetic(None, theta, x0, schedule, times, sigma, args.seed,
                            subject_id=f"synthetic-{args.seed}", step=args.step)
    out = [gio.save_experiment(args.out / "synthetic.exp", ds, spec)]
    out.append(gio.save_results(args.out / "truth.json", theta))
    return out


def cmd_fit(args) -> list:
    ds = _need_experiment(args)
    theta0 = _params(args)
    _check_x0(theta0.model, ds)
    res = fit(None, ds, theta0, args.optimizer, cost_kind=_cost_kind(theta0.model, ds),
              restarts=1, step=args.step)
    traj = integrate(None, res.theta_hat, ds.x0, ds.schedule, args.step)
    return [gio.save_results(args.out / "fit.json", res),
            gio.save_results(args.out / "fit_trajectory.csv", traj)]


def cmd_profile(args) -> list:
    ds = _need_experiment(args)
    theta = _params(args)
    _check_x0(theta.model, ds)
    kind = _cost_kind(theta.model, ds)
    curves = profile_all(None, ds, theta, GridSpec(args.grid_points, args.grid_span),
                         alpha=args.alpha, optimizer=args.optimizer, cost_kind=kind,
                         step=args.step)
    out = []
    for c in curves:
        out.append(gio.save_results(args.out / f"profile_{c.param_name}.csv", c))
    summary = {
        "family": theta.model.family.value,
        "alpha": args.alpha,
        "profiles": {c.param_name: {**c.flags, "threshold": c.threshold,
                                    "minimum": c.minimum,
                                    "converged": bool(c.converged.all())}
                     for c in curves},
        "curves": [c.to_dict() for c in curves],
    }
    out.append(_write_json(args.out / "profiles.json", summary))
    return out


def cmd_svd(args) -> list:
    ds = _need_experiment(args)
    theta = _params(args)
    _check_x0(theta.model, ds)
    ensemble = build_theta_ensemble(theta, relative_intervals(theta))
    report = structural_analysis(None, ensemble, ds.x0, ds.schedule, args.delta,
                                 threshold=args.sv_threshold, gap=args.sv_gap,
                                 cutoff=GROUP_CUTOFF, step=args.step)
    vectors = args.out / "svd_vectors.csv"
    vectors.write_text(report.vectors_csv(), encoding="utf-8")
    return [gio.save_results(args.out / "svd.json", report),
            gio.save_results(args.out / "svd_spectra.csv", report), vectors]


def cmd_jacobi(args) -> list:
    theta = _params(args)
    if theta.model.family is not Family.COMPLETE:
        raise UsageError("jacobi applies to the complete model")
    if args.experiment is not None:
        ds = _need_experiment(args)
        _check_x0(theta.model, ds)
        x0 = ds.x0
    else:
        # the test needs nonzero hormone compartments
        x0 = JACOBI_POINT
    doc = {"state": [float(v) for v in x0],
           **{k: jacobi_nullspace_check(theta, x0, k).to_dict() for k in ("six", "eight")}}
    return [_write_json(args.out / "jacobi.json", doc)]


def cmd_predict(args) -> list:
    if args.split is None:
        raise UsageError("predict needs --split")
    ds = _need_experiment(args)
    theta0 = _params(args)
    _check_x0(theta0.model, ds)
    rep = fit_predict_split(None, ds, args.split, theta0, args.optimizer, restarts=1,
                            step=args.step)
    traj = integrate(None, rep.theta, ds.x0, ds.schedule, args.step)
    return [gio.save_results(args.out / "predict.json", rep),
            gio.save_results(args.out / "predict_trajectory.csv", traj)]


_DISPATCH = {
    "simulate": cmd_simulate, "generate": cmd_generate, "fit": cmd_fit,
    "profile": cmd_profile, "svd": cmd_svd, "jacobi": cmd_jacobi, "predict": cmd_predict,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    problem = None
    if args.grid_points < 3 or args.grid_span <= 1:
        problem = "--grid-points must be >= 3 and --grid-span > 1"
    elif args.sv_threshold <= 0 or args.sv_gap <= 1:
        problem = "--sv-threshold must be > 0 and --sv-gap > 1"
    if problem:
        print(f"glucokin {args.command}: error: {problem}", file=sys.stderr)
        return 2
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        written = _DISPATCH[args.command](args)
    except UsageError as exc:
        print(f"glucokin {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ModelError, ScheduleError, DivergenceError, OSError, KeyError) as exc:
        print(f"glucokin {args.command}: error: {exc}", file=sys.stderr)
        return 1
    for p in written:
        print(p)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
