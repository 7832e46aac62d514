"""Least-squares calibration, MSE/BIC scoring, the fit-then-predict split and
synthetic data generation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from glucokin import _kernels as K
from glucokin.models import Family, ModelError, ModelSpec, ParamVector
from glucokin.optimize import OptimizeResult, nelder_mead, quasi_newton
from glucokin.solver import (
    DEFAULT_STEP,
    InputSchedule,
    ScheduleError,
    build_plan,
    integrate,
)

OPTIMIZERS = ("nelder-mead", "quasi-newton")
COST_KINDS = ("glucose", "insulin_joint", "glucagon_joint")


def _series(values, name: str, positive: bool) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"{name} must be a sequence of (t, value) pairs")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise ValueError(f"{name} times must be strictly increasing")
    if positive and np.any(arr[:, 1] <= 0):
        raise ValueError(f"{name} values must be > 0")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Glucose measurements (optionally hormone assays) with the schedule
    that produced them and the fixed initial state.

    Series are ``(n, 2)`` arrays of ``(t [d], value)``.
    """

    glucose: np.ndarray
    schedule: InputSchedule
    x0: np.ndarray
    insulin: np.ndarray | None = None
    glucagon: np.ndarray | None = None
    subject_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "glucose", _series(self.glucose, "glucose", True))
        for name in ("insulin", "glucagon"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, _series(val, name, False))
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be finite")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        t0, tf = self.schedule.horizon
        for name in ("glucose", "insulin", "glucagon"):
            s = getattr(self, name)
            if s is not None and s.size and (s[0, 0] < t0 or s[-1, 0] > tf):
                raise ValueError(f"{name} times fall outside the horizon [{t0}, {tf}]")

    @property
    def n(self) -> int:
        return int(self.glucose.shape[0])

    def restricted(self, t_end: float) -> "Dataset":
        """Measurements with ``t <= t_end`` under the truncated schedule."""
        def cut(s):
            return None if s is None else s[s[:, 0] <= t_end]
        return Dataset(cut(self.glucose), self.schedule.truncated(t_end), self.x0,
                       cut(self.insulin), cut(self.glucagon), self.subject_id)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and bool(np.array_equal(a, b))

        return (
            self.schedule == other.schedule
            and self.subject_id == other.subject_id
            and same(self.glucose, other.glucose)
            and same(self.x0, other.x0)
            and same(self.insulin, other.insulin)
            and same(self.glucagon, other.glucagon)
        )


def _sum_squares(r: np.ndarray) -> float:
    if not np.all(np.isfinite(r)):
        return math.inf
    with np.errstate(over="ignore"):
        return float(r @ r)


class Objective:
    """Sum of squared residuals for one model against one dataset.

    The integration plan is resolved once with every measurement time as a
    grid point, so each evaluation is a single kernel call and residuals use
    exact grid values. Invalid or divergent parameters give ``inf``.
    """

    def __init__(self, model: ModelSpec, dataset: Dataset, kind: str = "glucose",
                 step: float = DEFAULT_STEP):
        if kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {kind!r}; expected one of {COST_KINDS}")
        if dataset.x0.size != model.state_dim:
            raise ModelError(
                f"dataset x0 has {dataset.x0.size} states, {model.family.value} needs {model.state_dim}"
            )
        if dataset.n == 0:
            raise ValueError("dataset has no glucose measurements")
        self.model = model
        self.dataset = dataset
        self.kind = kind
        series = [(0, dataset.glucose)]
        if kind == "insulin_joint":
            if model.family is not Family.INSULIN_SUB:
                raise ModelError("the insulin joint cost applies to the insulin submodel")
            if dataset.insulin is None or not len(dataset.insulin):
                raise ValueError("dataset has no insulin series")
            series.append((model.state_names.index("I"), dataset.insulin))
        elif kind == "glucagon_joint":
            if model.family is not Family.GLUCAGON_SUB:
                raise ModelError("the glucagon joint cost applies to the glucagon submodel")
            if dataset.glucagon is None or not len(dataset.glucagon):
                raise ValueError("dataset has no glucagon series")
            series.append((model.state_names.index("H"), dataset.glucagon))
        times = np.concatenate([s[:, 0] for _, s in series])
        self.plan = build_plan(model, dataset.schedule, step, extra_knots=times)
        self._series = []
        for state, s in series:
            pos = np.searchsorted(self.plan.knots, s[:, 0])
            self._series.append((state, self.plan.knot_index[pos], s[:, 1].copy()))
        self._power_idx = [model.param_names.index(p) for p in ("p", "q") if p in model.param_names]
        self._x0 = np.array(dataset.x0, dtype=float)
        self._consts = model.constants_array()

    @property
    def n(self) -> int:
        return self.dataset.n

    def states(self, values) -> np.ndarray | None:
        """Full grid states, or None when the integration diverges."""
        th = np.asarray(values, dtype=float)
        if th.shape != (self.model.param_count,):
            raise ModelError(f"expected {self.model.param_count} parameters, got {th.shape}")
        p = self.plan
        _, xs, bad = K.rk4_path(self.model.code, self._x0, th, self._consts,
                                p.knots, p.nsteps, p.ra, p.force, p.kicks)
        return None if bad >= 0 else xs

    def _invalid(self, th: np.ndarray) -> bool:
        return (not np.all(np.isfinite(th)) or np.any(th < 0)
                or any(th[i] <= 0 for i in self._power_idx))

    def residuals(self, values) -> np.ndarray:
        """Concatenated residuals (data minus model); ``inf`` entries on failure."""
        th = np.asarray(values, dtype=float)
        if th.shape != (self.model.param_count,):
            raise ModelError(f"expected {self.model.param_count} parameters, got {th.shape}")
        total = sum(len(v) for _, _, v in self._series)
        if self._invalid(th):
            return np.full(total, math.inf)
        xs = self.states(th)
        if xs is None:
            return np.full(total, math.inf)
        return np.concatenate([v - xs[idx, state] for state, idx, v in self._series])

    def glucose_sse(self, values) -> float:
        r = self.residuals(values)[: self.n]
        return _sum_squares(r)

    def __call__(self, values) -> float:
        return _sum_squares(self.residuals(values))


def _objective(theta: ParamVector, model, dataset, kind) -> Objective:
    spec = theta.model if model is None else model
    if spec != theta.model:
        raise ModelError("model and theta disagree")
    return Objective(spec, dataset, kind)


def cost_glucose(theta: ParamVector, model: ModelSpec | None, dataset: Dataset) -> float:
    """Sum of squared glucose residuals; ``inf`` if the simulation diverges."""
    return _objective(theta, model, dataset, "glucose")(theta.values)


def cost_insulin_joint(theta: ParamVector, model: ModelSpec | None, dataset: Dataset) -> float:
    """Glucose SSE plus insulin-assay SSE (insulin submodel)."""
    return _objective(theta, model, dataset, "insulin_joint")(theta.values)


def cost_glucagon_joint(theta: ParamVector, model: ModelSpec | None, dataset: Dataset) -> float:
    """Glucose SSE plus glucagon-assay SSE (glucagon submodel)."""
    return _objective(theta, model, dataset, "glucagon_joint")(theta.values)


def bic(n: int, mse: float, n_params: int) -> float:
    """``n ln(mse) + n_params ln(n)``; ``-inf`` for a perfect fit."""
    if n <= 0:
        raise ValueError("n must be positive")
    if mse < 0 or not math.isfinite(mse):
        raise ValueError(f"mse must be finite and >= 0, got {mse}")
    if mse == 0:
        return -math.inf
    return n * math.log(mse) + n_params * math.log(n)


@dataclass(frozen=True)
class FitResult:
    theta_hat: ParamVector
    cost: float
    mse: float
    bic: float
    n: int
    iterations: int
    converged: bool
    optimizer: str
    evaluations: int = 0
    initial_cost: float = math.nan
    trace_length: int = 0
    final_measure: float = math.nan
    cost_kind: str = "glucose"

    def to_dict(self) -> dict:
        return {
            "family": self.theta_hat.model.family.value,
            "params": self.theta_hat.as_dict(),
            "constants": dict(self.theta_hat.model.fixed_constants),
            "cost": self.cost,
            "mse": self.mse,
            "bic": self.bic,
            "n": self.n,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "optimizer": self.optimizer,
            "initial_cost": self.initial_cost,
            "trace_length": self.trace_length,
            "final_measure": self.final_measure,
            "cost_kind": self.cost_kind,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        spec = ModelSpec(d["family"], d.get("constants", {}))
        theta = ParamVector.from_mapping(spec, d["params"])
        return cls(theta, float(d["cost"]), float(d["mse"]), float(d["bic"]), int(d["n"]),
                   int(d["iterations"]), bool(d["converged"]), d["optimizer"],
                   int(d.get("evaluations", 0)), float(d.get("initial_cost", math.nan)),
                   int(d.get("trace_length", 0)), float(d.get("final_measure", math.nan)),
                   d.get("cost_kind", "glucose"))

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, FitResult):
            return NotImplemented
        a, b = self.to_dict(), other.to_dict()
        return json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def score(fit: FitResult) -> tuple:
    """``(mse, bic)`` recomputed from the fit's SSE-based MSE and sample count."""
    if fit.n <= 0:
        raise ValueError("fit has no samples")
    return fit.mse, bic(fit.n, fit.mse, fit.theta_hat.model.param_count)


def _run_optimizer(optimizer: str, cost, x0, options: dict) -> OptimizeResult:
    if optimizer == "nelder-mead":
        return nelder_mead(cost, x0, **options)
    if optimizer == "quasi-newton":
        return quasi_newton(cost, x0, **options)
    raise ValueError(f"unknown optimizer {optimizer!r}; expected one of {OPTIMIZERS}")


def minimize(cost, x0, optimizer: str = "nelder-mead", restarts: int = 0,
             options: dict | None = None) -> OptimizeResult:
    """Run an optimizer, restarting from the best point up to ``restarts``
    times while the restart still lowers the cost."""
    options = dict(options or {})
    res = _run_optimizer(optimizer, cost, x0, options)
    first = res.initial_fun
    iters, evals = res.iterations, res.evaluations
    for _ in range(restarts):
        nxt = _run_optimizer(optimizer, cost, res.x, options)
        iters += nxt.iterations
        evals += nxt.evaluations
        improved = nxt.fun < res.fun - 1e-12 * max(1.0, abs(res.fun))
        if nxt.fun <= res.fun:
            res = nxt
        if not improved:
            break
    return OptimizeResult(res.x, res.fun, iters, evals, res.converged, res.message,
                          first, res.final_measure, res.trace)


def fit(
    model: ModelSpec | None,
    dataset: Dataset,
    theta0: ParamVector,
    optimizer: str = "nelder-mead",
    *,
    cost_kind: str = "glucose",
    restarts: int = 0,
    options: dict | None = None,
    step: float = DEFAULT_STEP,
) -> FitResult:
    """Calibrate ``theta0.model`` against ``dataset`` starting from ``theta0``."""
    spec = theta0.model if model is None else model
    if spec != theta0.model:
        raise ModelError("model and theta0 disagree")
    obj = Objective(spec, dataset, cost_kind, step)
    res = minimize(obj, theta0.values, optimizer, restarts, options)
    theta = theta0.with_values(res.x)
    sse = obj.glucose_sse(res.x)
    n = obj.n
    mse = sse / n
    return FitResult(
        theta_hat=theta, cost=res.fun, mse=mse,
        bic=bic(n, mse, spec.param_count) if math.isfinite(mse) else math.inf,
        n=n, iterations=res.iterations, converged=res.converged,
        optimizer=optimizer, evaluations=res.evaluations,
        initial_cost=res.initial_fun, trace_length=len(res.trace),
        final_measure=res.final_measure, cost_kind=cost_kind,
    )


@dataclass(frozen=True)
class SplitReport:
    theta: ParamVector
    split_time: float
    n_first: int
    n_second: int
    mse_first: float
    mse_second: float
    mse_total: float
    bic_first: float
    bic_second: float
    bic_total: float
    fit: FitResult = field(repr=False, default=None, compare=False)

    def to_dict(self) -> dict:
        return {
            "family": self.theta.model.family.value,
            "params": self.theta.as_dict(),
            "constants": dict(self.theta.model.fixed_constants),
            "split_time": self.split_time,
            "n_first": self.n_first,
            "n_second": self.n_second,
            "mse_first": self.mse_first,
            "mse_second": self.mse_second,
            "mse_total": self.mse_total,
            "bic_first": self.bic_first,
            "bic_second": self.bic_second,
            "bic_total": self.bic_total,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "SplitReport":
        spec = ModelSpec(d["family"], d.get("constants", {}))
        theta = ParamVector.from_mapping(spec, d["params"])
        return cls(theta, float(d["split_time"]), int(d["n_first"]), int(d["n_second"]),
                   *(float(d[k]) for k in ("mse_first", "mse_second", "mse_total",
                                           "bic_first", "bic_second", "bic_total")))


MIN_SEGMENT_POINTS = 5


def fit_predict_split(
    model: ModelSpec | None,
    dataset: Dataset,
    split_time: float,
    theta0: ParamVector,
    optimizer: str = "nelder-mead",
    *,
    restarts: int = 0,
    options: dict | None = None,
    step: float = DEFAULT_STEP,
) -> SplitReport:
    """Fit on ``t <= split_time`` then score both segments and the whole
    record with the calibrated parameters."""
    t = dataset.glucose[:, 0]
    first = t <= split_time
    n1 = int(first.sum())
    n2 = int((~first).sum())
    if n1 < MIN_SEGMENT_POINTS or n2 < MIN_SEGMENT_POINTS:
        raise ValueError(
            f"split at {split_time} leaves {n1} and {n2} points; each segment needs "
            f">= {MIN_SEGMENT_POINTS}"
        )
    calib = fit(model, dataset.restricted(split_time), theta0, optimizer,
                restarts=restarts, options=options, step=step)
    full = Objective(calib.theta_hat.model, dataset, "glucose", step)
    r = full.residuals(calib.theta_hat.values)[: full.n]
    m = calib.theta_hat.model.param_count

    def seg(mask):
        if not np.all(np.isfinite(r[mask])):
            return math.inf, math.inf
        k = int(mask.sum())
        mse = float(r[mask] @ r[mask]) / k
        return mse, bic(k, mse, m)

    mse1, bic1 = seg(first)
    mse2, bic2 = seg(~first)
    mset, bict = seg(np.ones_like(first))
    return SplitReport(calib.theta_hat, float(split_time), n1, n2, mse1, mse2, mset,
                       bic1, bic2, bict, calib)


def generate_synthetic(
    model: ModelSpec | None,
    theta: ParamVector,
    x0,
    schedule: InputSchedule,
    sample_times,
    sigma: float,
    rng_seed: int | None,
    *,
    hormone_sigma: float | None = None,
    subject_id: str = "synthetic",
    step: float = DEFAULT_STEP,
) -> Dataset:
    """Simulate ``theta`` and sample glucose with i.i.d. N(0, sigma^2) noise.

    Submodels also get the assay they are calibrated against (insulin ``I``
    or glucagon ``H``), with noise ``hormone_sigma`` (default ``sigma``).
    """
    if not sigma >= 0:
        raise ValueError("sigma must be >= 0")
    spec = theta.model if model is None else model
    if spec != theta.model:
        raise ModelError("model and theta disagree")
    times = np.asarray(sample_times, dtype=float)
    traj = integrate(spec, theta, x0, schedule, step, extra_knots=times)
    rng = np.random.default_rng(rng_seed)
    pos = np.searchsorted(traj.times, times)
    if np.any(pos >= traj.times.size) or not np.array_equal(traj.times[pos], times):
        raise ScheduleError("sample times must lie within the horizon")
    g = traj.states[pos, 0] + (rng.normal(0.0, sigma, times.size) if sigma > 0 else 0.0)
    hs = sigma if hormone_sigma is None else hormone_sigma
    insulin = glucagon = None
    if spec.family is Family.INSULIN_SUB:
        v = traj.states[pos, spec.state_names.index("I")]
        insulin = np.column_stack([times, v + (rng.normal(0.0, hs, times.size) if hs > 0 else 0.0)])
    elif spec.family is Family.GLUCAGON_SUB:
        v = traj.states[pos, spec.state_names.index("H")]
        glucagon = np.column_stack([times, v + (rng.normal(0.0, hs, times.size) if hs > 0 else 0.0)])
    return Dataset(np.column_stack([times, g]), schedule, np.asarray(x0, dtype=float),
                   insulin, glucagon, subject_id)


__all__ = [
    "Dataset", "Objective", "FitResult", "SplitReport", "bic", "score", "fit",
    "minimize", "cost_glucose", "cost_insulin_joint", "cost_glucagon_joint",
    "fit_predict_split", "generate_synthetic", "nelder_mead", "quasi_newton",
    "OPTIMIZERS", "COST_KINDS",
]
