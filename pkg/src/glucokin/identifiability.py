"""Structural and practical identifiability.

* SVD of glucose sensitivity matrices over an ensemble of parameter vectors,
  flagging tiny singular values separated by a large gap and reporting the
  parameters that load on their right singular vectors.
* Profile likelihoods with percentile (or chi-square) confidence thresholds.
* Lie-derivative Jacobi rows of the complete model and residuals of its
  analytic null vectors.
"""
from __future__ import annotations

import json
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Mapping, Sequence

import numpy as np

from glucokin.estimation import Dataset, Objective, minimize
from glucokin.linalg import svd
from glucokin.models import Family, ModelError, ModelSpec, ParamVector
from glucokin.sensitivity import DEFAULT_DELTA, assemble_sensitivity_matrix
from glucokin.solver import DEFAULT_STEP, InputSchedule

SV_THRESHOLD = 1e-9
SV_GAP = 1e3
GROUP_CUTOFF = 0.3


def worker_count(requested: int | None = None) -> int:
    """Worker cap from the argument or ``GLUCOKIN_THREADS`` (default 1)."""
    if requested is not None:
        return max(1, int(requested))
    raw = os.environ.get("GLUCOKIN_THREADS", "").strip()
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


def _pmap(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ------------------------------------------------------------------- SVD


def build_theta_ensemble(theta_hat: ParamVector, confidence_intervals) -> list:
    """``theta_hat`` plus, per parameter, copies shifted by +-1/100 of that
    parameter's confidence-interval length (clamped at 0).

    ``confidence_intervals`` is a mapping name -> (lo, hi) or a sequence of
    pairs in parameter order. Power exponents that a shift would drive to
    zero keep their nominal value.
    """
    names = theta_hat.names
    if isinstance(confidence_intervals, Mapping):
        missing = [n for n in names if n not in confidence_intervals]
        if missing:
            raise ValueError(f"missing confidence interval for {missing}")
        ivals = [confidence_intervals[n] for n in names]
    else:
        ivals = list(confidence_intervals)
        if len(ivals) != len(names):
            raise ValueError(f"expected {len(names)} intervals, got {len(ivals)}")
    out = [theta_hat]
    for j, (lo, hi) in enumerate(ivals):
        lo, hi = float(lo), float(hi)
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
            raise ValueError(f"invalid interval for {names[j]}: ({lo}, {hi})")
        shift = (hi - lo) / 100.0
        for sgn in (1.0, -1.0):
            v = theta_hat.values.copy()
            v[j] = max(0.0, v[j] + sgn * shift)
            if names[j] in ("p", "q") and v[j] <= 0:
                v[j] = theta_hat.values[j]
            out.append(theta_hat.with_values(v))
    return out


def relative_intervals(theta_hat: ParamVector, fraction: float = 0.5) -> dict:
    """Symmetric stand-in intervals ``theta*(1 -+ fraction)``."""
    return {n: (v * (1 - fraction), v * (1 + fraction)) for n, v in theta_hat.as_dict().items()}


def small_singular_indices(sv, threshold: float = SV_THRESHOLD, gap: float = SV_GAP) -> list:
    """Indices from the first position ``k`` with ``sv[k] <= threshold`` and
    ``sv[k-1] / sv[k] >= gap`` to the end of the (descending) spectrum."""
    sv = np.asarray(sv, dtype=float)
    for k in range(sv.size):
        if sv[k] > threshold:
            continue
        if k == 0:
            return list(range(sv.size))
        ratio = math.inf if sv[k] == 0 else sv[k - 1] / sv[k]
        if ratio >= gap:
            return list(range(k, sv.size))
    return []


@dataclass(frozen=True)
class Decomposition:
    label: str
    singular_values: np.ndarray
    right_vectors: np.ndarray  # columns
    small_indices: tuple

    def groups(self, names: Sequence[str], cutoff: float = GROUP_CUTOFF) -> list:
        out = []
        for k in self.small_indices:
            v = self.right_vectors[:, k]
            members = tuple(names[j] for j in range(len(names)) if abs(v[j]) >= cutoff)
            if members:
                out.append(members)
        return out


@dataclass(frozen=True)
class SVDReport:
    """Per-matrix spectra, flagged indices and correlated groups.

    ``groups`` maps a parameter tuple to the number of decompositions in
    which it was flagged. ``singular_values`` and ``right_vectors`` refer to
    the first decomposition (the nominal parameter vector).
    """

    param_names: tuple
    decompositions: tuple
    groups: tuple  # ((names...), count) sorted by count desc
    theta_ensemble: tuple = ()
    threshold: float = SV_THRESHOLD
    gap: float = SV_GAP
    cutoff: float = GROUP_CUTOFF

    @property
    def singular_values(self) -> np.ndarray:
        return self.decompositions[0].singular_values

    @property
    def right_vectors(self) -> np.ndarray:
        return self.decompositions[0].right_vectors

    @property
    def small_indices(self) -> tuple:
        return self.decompositions[0].small_indices

    @property
    def smallest_singular_value(self) -> float:
        return float(min(d.singular_values.min() for d in self.decompositions))

    @property
    def flagged(self) -> bool:
        return any(d.small_indices for d in self.decompositions)

    def has_group_containing(self, *names: str) -> bool:
        want = set(names)
        return any(want <= set(g) for g, _ in self.groups)

    def to_dict(self) -> dict:
        return {
            "param_names": list(self.param_names),
            "threshold": self.threshold,
            "gap": self.gap,
            "cutoff": self.cutoff,
            "groups": [{"params": list(g), "count": c} for g, c in self.groups],
            "decompositions": [
                {
                    "label": d.label,
                    "singular_values": d.singular_values.tolist(),
                    "right_vectors": d.right_vectors.tolist(),
                    "small_indices": list(d.small_indices),
                }
                for d in self.decompositions
            ],
            "theta_ensemble": [t.values.tolist() for t in self.theta_ensemble],
            "family": (self.theta_ensemble[0].model.family.value if self.theta_ensemble else None),
            "constants": (dict(self.theta_ensemble[0].model.fixed_constants)
                          if self.theta_ensemble else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "SVDReport":
        decs = tuple(
            Decomposition(x["label"], np.array(x["singular_values"], dtype=float),
                          np.array(x["right_vectors"], dtype=float).reshape(
                              len(d["param_names"]), -1),
                          tuple(x["small_indices"]))
            for x in d["decompositions"]
        )
        ens = ()
        if d.get("family") and d.get("theta_ensemble"):
            spec = ModelSpec(d["family"], d.get("constants", {}))
            ens = tuple(ParamVector(spec, np.array(v, dtype=float)) for v in d["theta_ensemble"])
        groups = tuple((tuple(g["params"]), int(g["count"])) for g in d["groups"])
        return cls(tuple(d["param_names"]), decs, groups, ens,
                   float(d["threshold"]), float(d["gap"]), float(d["cutoff"]))

    @classmethod
    def from_json(cls, text: str) -> "SVDReport":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, SVDReport):
            return NotImplemented
        return json.dumps(self.to_dict(), sort_keys=True) == json.dumps(other.to_dict(), sort_keys=True)

    def spectra_csv(self) -> str:
        lines = ["label,index,singular_value,flagged"]
        for d in self.decompositions:
            for k, s in enumerate(d.singular_values):
                lines.append(f"{d.label},{k},{float(s)!r},{int(k in d.small_indices)}")
        return "\n".join(lines) + "\n"

    def vectors_csv(self) -> str:
        """Bar data of every flagged right singular vector."""
        lines = ["label,index,param,entry"]
        for d in self.decompositions:
            for k in d.small_indices:
                for j, name in enumerate(self.param_names):
                    lines.append(f"{d.label},{k},{name},{float(d.right_vectors[j, k])!r}")
        return "\n".join(lines) + "\n"


def decompose(matrix, label: str = "", threshold: float = SV_THRESHOLD,
              gap: float = SV_GAP) -> Decomposition:
    _, s, v = svd(matrix)
    return Decomposition(label, s, v, tuple(small_singular_indices(s, threshold, gap)))


def analyze_matrices(matrices: Sequence, param_names: Sequence[str], labels=None,
                     threshold: float = SV_THRESHOLD, gap: float = SV_GAP,
                     cutoff: float = GROUP_CUTOFF, ensemble=()) -> SVDReport:
    """SVD report over explicit sensitivity matrices (one per case)."""
    names = tuple(param_names)
    labels = labels or [str(i) for i in range(len(matrices))]
    decs = []
    for lab, M in zip(labels, matrices):
        M = np.asarray(M, dtype=float)
        if M.shape[1] != len(names):
            raise ModelError(f"matrix {lab} has {M.shape[1]} columns, expected {len(names)}")
        decs.append(decompose(M, lab, threshold, gap))
    counts = Counter()
    for d in decs:
        for g in set(d.groups(names, cutoff)):
            counts[g] += 1
    groups = tuple(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))
    return SVDReport(names, tuple(decs), groups, tuple(ensemble), threshold, gap, cutoff)


def structural_analysis(
    model: ModelSpec | None,
    theta_ensemble: Sequence[ParamVector],
    x0,
    schedule: InputSchedule,
    delta: float = DEFAULT_DELTA,
    *,
    threshold: float = SV_THRESHOLD,
    gap: float = SV_GAP,
    cutoff: float = GROUP_CUTOFF,
    combined: bool = False,
    step: float = DEFAULT_STEP,
    workers: int | None = None,
) -> SVDReport:
    """SVD identifiability over an ensemble of parameter vectors.

    With ``combined`` an extra decomposition of all members' matrices stacked
    row-wise is appended (label ``"combined"``).
    """
    ens = list(theta_ensemble)
    if not ens:
        raise ValueError("empty parameter ensemble")
    spec = ens[0].model if model is None else model
    for t in ens:
        if t.model.family is not spec.family or t.names != spec.param_names:
            raise ModelError("inconsistent parameter layouts within the ensemble")
    mats = _pmap(
        lambda t: assemble_sensitivity_matrix(None, t, x0, schedule, delta, step).rows,
        ens, worker_count(workers),
    )
    labels = [f"theta{i}" for i in range(len(ens))]
    if combined:
        mats.append(np.vstack(mats))
        labels.append("combined")
    return analyze_matrices(mats, spec.param_names, labels, threshold, gap, cutoff, ens)


# ------------------------------------------------------ profile likelihood


def confidence_threshold(values, alpha: float) -> float:
    """Nearest-rank ``alpha``-th percentile of the pooled -2PL values."""
    v = np.asarray(values, dtype=float).ravel()
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise ValueError("empty -2PL pool")
    if not 0 < alpha < 100:
        raise ValueError("alpha must lie in (0, 100)")
    return float(np.percentile(v, alpha, method="inverted_cdf"))


def chi2_threshold(minimum: float, alpha: float) -> float:
    """``minimum`` plus the one-degree-of-freedom chi-square quantile."""
    if not 0 < alpha < 100:
        raise ValueError("alpha must lie in (0, 100)")
    z = NormalDist().inv_cdf(0.5 + alpha / 200.0)
    return float(minimum + z * z)


@dataclass(frozen=True)
class GridSpec:
    points: int = 41
    span: float = 10.0

    def grid(self, center: float) -> np.ndarray:
        """``points`` log-spaced values over [center/span, center*span]; the
        middle point is ``center`` exactly when ``points`` is odd."""
        if not center > 0:
            raise ValueError("a log-spaced profile grid needs a positive centre")
        if self.points < 3 or self.span <= 1:
            raise ValueError("grid needs >= 3 points and span > 1")
        g = center * np.logspace(-1.0, 1.0, self.points, base=self.span)
        if self.points % 2:
            g[self.points // 2] = center
        else:
            g = np.sort(np.append(g, center))
        return g


@dataclass(frozen=True, eq=False)
class ProfileCurve:
    """-2PL over a grid of one parameter with the re-optimized vectors."""

    param_name: str
    grid: np.ndarray
    values: np.ndarray
    theta_at: np.ndarray
    threshold: float
    center_index: int
    minimum: float
    converged: np.ndarray
    alpha: float = 96.0
    threshold_mode: str = "percentile"
    pooling: str = "parameter"

    @property
    def argmin(self) -> int:
        return int(np.nanargmin(self.values))

    @property
    def flat_left(self) -> bool:
        k = self.argmin
        left = self.values[:k]
        return not (left.size and np.nanmax(left) >= self.threshold)

    @property
    def flat_right(self) -> bool:
        k = self.argmin
        right = self.values[k + 1:]
        return not (right.size and np.nanmax(right) >= self.threshold)

    @property
    def identifiable(self) -> bool:
        return not (self.flat_left or self.flat_right)

    @property
    def flags(self) -> dict:
        return {"identifiable": bool(self.identifiable), "flat_left": bool(self.flat_left),
                "flat_right": bool(self.flat_right)}

    def local_minima(self) -> list:
        v = self.values
        out = []
        for k in range(v.size):
            lo = v[k - 1] if k > 0 else math.inf
            hi = v[k + 1] if k + 1 < v.size else math.inf
            if v[k] <= lo and v[k] <= hi and (v[k] < lo or v[k] < hi):
                out.append(k)
        return out

    def unique_interior_minimum(self, tol: float = 0.0) -> bool:
        """The global minimum is off the grid ends and every other local
        minimum lies more than ``tol`` above it."""
        k = self.argmin
        if k == 0 or k == self.values.size - 1:
            return False
        others = [j for j in self.local_minima() if j != k]
        return all(self.values[j] > self.values[k] + tol for j in others)

    def with_threshold(self, threshold: float, mode: str, pooling: str,
                       alpha: float) -> "ProfileCurve":
        return ProfileCurve(self.param_name, self.grid, self.values, self.theta_at,
                            float(threshold), self.center_index, self.minimum,
                            self.converged, alpha, mode, pooling)

    def to_dict(self) -> dict:
        return {
            "param_name": self.param_name,
            "grid": np.asarray(self.grid, dtype=float).tolist(),
            "values": np.asarray(self.values, dtype=float).tolist(),
            "theta_at": np.asarray(self.theta_at, dtype=float).tolist(),
            "threshold": float(self.threshold),
            "center_index": int(self.center_index),
            "minimum": float(self.minimum),
            "converged": self.converged.astype(bool).tolist(),
            "alpha": float(self.alpha),
            "threshold_mode": self.threshold_mode,
            "pooling": self.pooling,
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ProfileCurve":
        return cls(d["param_name"], np.array(d["grid"], dtype=float),
                   np.array(d["values"], dtype=float),
                   np.array(d["theta_at"], dtype=float), float(d["threshold"]),
                   int(d["center_index"]), float(d["minimum"]),
                   np.array(d["converged"], dtype=bool), float(d["alpha"]),
                   d["threshold_mode"], d["pooling"])

    @classmethod
    def from_json(cls, text: str) -> "ProfileCurve":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, ProfileCurve):
            return NotImplemented
        return json.dumps(self.to_dict(), sort_keys=True) == json.dumps(other.to_dict(), sort_keys=True)

    def to_csv(self) -> str:
        f = self.flags
        lines = ["grid,value,identifiable,flat_left,flat_right"]
        for g, v in zip(self.grid, self.values):
            lines.append(f"{float(g)!r},{float(v)!r},{int(f['identifiable'])},{int(f['flat_left'])},"
                         f"{int(f['flat_right'])}")
        return "\n".join(lines) + "\n"


def _profile_core(obj: Objective, theta_hat: np.ndarray, j: int, grid: np.ndarray,
                  center: int, sigma2: float, optimizer: str, restarts: int,
                  options: dict):
    m = theta_hat.size
    free = [i for i in range(m) if i != j]
    values = np.full(grid.size, math.nan)
    thetas = np.tile(theta_hat, (grid.size, 1))
    conv = np.zeros(grid.size, dtype=bool)

    def solve(k, start):
        full = theta_hat.copy()
        full[j] = grid[k]

        def cost(z):
            full[free] = z
            return obj(full)

        if free:
            res = minimize(cost, start[free], optimizer, restarts, options)
            best, fbest, ok = res.x, res.fun, res.converged
            f0 = cost(start[free])
            if f0 < fbest:
                best, fbest = start[free], f0
        else:
            best, fbest, ok = np.zeros(0), cost(np.zeros(0)), True
        out = theta_hat.copy()
        out[j] = grid[k]
        out[free] = best
        values[k] = fbest / sigma2
        thetas[k] = out
        conv[k] = ok and math.isfinite(fbest)

    solve(center, theta_hat)
    for k in range(center + 1, grid.size):
        solve(k, thetas[k - 1])
    for k in range(center - 1, -1, -1):
        solve(k, thetas[k + 1])
    return values, thetas, conv


def profile_likelihood(
    model: ModelSpec | None,
    dataset: Dataset,
    theta_hat: ParamVector,
    param_index: int | str,
    grid_spec: GridSpec | Sequence[float] = GridSpec(),
    sigma2: float | None = None,
    *,
    alpha: float = 96.0,
    threshold_mode: str = "percentile",
    optimizer: str = "nelder-mead",
    restarts: int = 1,
    options: dict | None = None,
    cost_kind: str = "glucose",
    step: float = DEFAULT_STEP,
) -> ProfileCurve:
    """-2PL of one parameter: for each grid value, minimize the scaled SSE
    over the other parameters, warm-starting from the neighbouring point.

    ``sigma2`` defaults to the MSE at ``theta_hat``. The threshold is the
    ``alpha``-th percentile of this curve's values (``threshold_mode=
    "percentile"``) or the minimum plus a chi-square quantile (``"chi2"``).
    """
    spec = theta_hat.model if model is None else model
    if spec != theta_hat.model:
        raise ModelError("model and theta_hat disagree")
    j = spec.param_names.index(param_index) if isinstance(param_index, str) else int(param_index)
    if not 0 <= j < spec.param_count:
        raise IndexError(f"parameter index {j} out of range")
    obj = Objective(spec, dataset, cost_kind, step)
    th = theta_hat.values.copy()
    if sigma2 is None:
        sigma2 = obj.glucose_sse(th) / obj.n
    if not sigma2 > 0:
        raise ValueError("sigma2 must be > 0")
    if isinstance(grid_spec, GridSpec):
        grid = grid_spec.grid(th[j])
    else:
        grid = np.unique(np.append(np.asarray(grid_spec, dtype=float), th[j]))
        if grid[0] < 0:
            raise ValueError("profile grid must be nonnegative")
    center = int(np.flatnonzero(grid == th[j])[0])
    opts = {"tol_f": 1e-9, "tol_x": 1e-9, "max_iter": 4000}
    opts.update(options or {})
    values, thetas, conv = _profile_core(obj, th, j, grid, center, sigma2,
                                         optimizer, restarts, opts)
    curve = ProfileCurve(spec.param_names[j], grid, values, thetas, math.nan, center,
                         float(np.nanmin(values)), conv, alpha, threshold_mode, "parameter")
    return curve.with_threshold(_threshold(values, alpha, threshold_mode), threshold_mode,
                                "parameter", alpha)


def _threshold(values, alpha: float, mode: str) -> float:
    if mode == "percentile":
        return confidence_threshold(values, alpha)
    if mode == "chi2":
        return chi2_threshold(float(np.nanmin(values)), alpha)
    raise ValueError(f"unknown threshold mode {mode!r}")


def profile_all(
    model: ModelSpec | None,
    dataset: Dataset,
    theta_hat: ParamVector,
    grid_spec: GridSpec = GridSpec(),
    sigma2: float | None = None,
    *,
    alpha: float = 96.0,
    threshold_mode: str = "percentile",
    pooling: str = "parameter",
    params: Sequence[str] | None = None,
    workers: int | None = None,
    **kwargs,
) -> list:
    """Profiles of several parameters. ``pooling="all"`` recomputes the
    percentile threshold over every curve's values together."""
    if pooling not in ("parameter", "all"):
        raise ValueError("pooling must be 'parameter' or 'all'")
    spec = theta_hat.model if model is None else model
    names = list(params) if params is not None else list(spec.param_names)
    if sigma2 is None:
        obj = Objective(spec, dataset, kwargs.get("cost_kind", "glucose"),
                        kwargs.get("step", DEFAULT_STEP))
        sigma2 = obj.glucose_sse(theta_hat.values) / obj.n
    curves = _pmap(
        lambda name: profile_likelihood(spec, dataset, theta_hat, name, grid_spec, sigma2,
                                        alpha=alpha, threshold_mode=threshold_mode, **kwargs),
        names, worker_count(workers),
    )
    if pooling == "all" and threshold_mode == "percentile":
        thr = confidence_threshold(np.concatenate([c.values for c in curves]), alpha)
        curves = [c.with_threshold(thr, threshold_mode, "all", alpha) for c in curves]
    return curves


def intervals_from_profiles(curves: Sequence[ProfileCurve]) -> dict:
    """Grid range where each curve stays below its threshold (whole grid on a
    flat side)."""
    out = {}
    for c in curves:
        below = np.flatnonzero(c.values < c.threshold)
        k = c.argmin
        lo_i, hi_i = k, k
        while lo_i - 1 >= 0 and c.values[lo_i - 1] < c.threshold:
            lo_i -= 1
        while hi_i + 1 < c.values.size and c.values[hi_i + 1] < c.threshold:
            hi_i += 1
        if below.size == 0:
            lo_i, hi_i = k, k
        out[c.param_name] = (float(c.grid[lo_i]), float(c.grid[hi_i]))
    return out


# ------------------------------------------------------- Jacobi rank test

SUBSETS = {
    "six": ("m1", "m2", "n", "n2", "x1", "x2"),
    "eight": ("kI", "ki1", "m1", "m2", "n", "n2", "x1", "x2"),
}

LIE_ROWS = ("H", "Lf0 H", "Lf1 H", "Lf2 H", "Lf3 H",
            "Lf0 Lf0 H", "Lf1 Lf0 H", "Lf2 Lf0 H", "Lf3 Lf0 H")


class PreconditionError(ValueError):
    """An initial condition required to be nonzero is zero."""


@dataclass(frozen=True)
class JacobiMatrix:
    rows: np.ndarray  # len(LIE_ROWS) x len(subset)
    subset_names: tuple
    row_names: tuple = LIE_ROWS


@dataclass(frozen=True)
class JacobiReport:
    jacobi: JacobiMatrix
    vectors: tuple
    residuals: tuple  # |J v| / |v|
    rank: int
    # zero exactly when a null vector with nonzero kI, ki1 entries exists
    regularity: float | None = None

    def to_dict(self) -> dict:
        return {
            "subset": list(self.jacobi.subset_names),
            "rows": self.jacobi.rows.tolist(),
            "row_names": list(self.jacobi.row_names),
            "vectors": [v.tolist() for v in self.vectors],
            "residuals": list(self.residuals),
            "rank": self.rank,
            "regularity": self.regularity,
        }


def _complete_point(params: ParamVector, x0):
    if params.model.family is not Family.COMPLETE:
        raise ModelError("the Jacobi test is defined for the complete model")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != 7:
        raise ModelError("complete-model state has 7 entries")
    G, I, i1, i2, H, h1, xi = x
    zero = [n for n, v in zip(("G", "I", "i1", "H", "h1", "xi"), (G, I, i1, H, h1, xi)) if v == 0]
    if zero:
        raise PreconditionError(f"initial conditions must be nonzero: {zero}")
    if i1 < 0:
        raise PreconditionError("i1(0) must be positive for the power terms")
    return x, params.as_dict(), params.model.fixed_constants


def jacobi_matrix(params: ParamVector, x0, subset: str = "six") -> JacobiMatrix:
    """Hand-coded gradients of the output and its first Lie derivatives
    (drift and input directions) with respect to a parameter subset."""
    key = subset.lower()
    if key not in SUBSETS:
        raise ValueError(f"subset must be one of {tuple(SUBSETS)}")
    x, P, C = _complete_point(params, x0)
    G, I, i1, i2, H, h1, xi = x
    Ib, Hb = C["Ib"], C["Hb"]
    k1, kI, ki1, kH, rG = P["k1"], P["kI"], P["ki1"], P["kH"], P["rG"]
    m1, m2, m3, m4, p, q = P["m1"], P["m2"], P["m3"], P["m4"], P["p"], P["q"]
    i1p = i1 ** p
    i1q = i1 ** q
    a = k1 + kI * (I + Ib) + ki1 * i1
    fG = -a * G + kH * (H + Hb) * xi
    fI = -m1 * I + m2 * i1p
    fi1 = -m3 * i1q + m4 * i2
    # d(L_f0 L_f0 H)/d theta for each parameter that may appear in a subset
    j00 = {
        "m1": I * kI * G,
        "m2": -i1p * kI * G,
        "n": -H * kH * xi,
        "n2": h1 * kH * xi,
        "x1": -H * xi * (kH * (H + Hb)),
        "x2": G * I * (kH * (H + Hb)),
        "kI": (-(I + Ib)) * G * (-a) + fG * (-(I + Ib)) + fI * (-G),
        "ki1": (-i1) * G * (-a) + fG * (-i1) + fi1 * (-G),
    }
    j0 = {"kI": -(I + Ib) * G, "ki1": -i1 * G}
    j10 = {"kI": -(I + Ib) * rG, "ki1": -i1 * rG}
    names = SUBSETS[key]
    rows = np.zeros((len(LIE_ROWS), len(names)))
    for c, name in enumerate(names):
        rows[1, c] = j0.get(name, 0.0)
        rows[5, c] = j00[name]
        rows[6, c] = j10.get(name, 0.0)
    return JacobiMatrix(rows, names)


def null_vectors(params: ParamVector, x0, subset: str = "six") -> list:
    """Analytic null vectors: (1/I, 1/i1^p) on (m1, m2), (1/H, 1/h1) on
    (n, n2) and (1/(H xi), 1/(G I)) on (x1, x2), zero elsewhere."""
    x, P, _ = _complete_point(params, x0)
    G, I, i1, i2, H, h1, xi = x
    names = SUBSETS[subset.lower()]
    pairs = (
        {"m1": 1 / I, "m2": 1 / i1 ** P["p"]},
        {"n": 1 / H, "n2": 1 / h1},
        {"x1": 1 / (H * xi), "x2": 1 / (G * I)},
    )
    return [np.array([pr.get(n, 0.0) for n in names]) for pr in pairs]


def jacobi_nullspace_check(params: ParamVector, x0, subset: str = "six") -> JacobiReport:
    """Residuals ``|J v| / |v|`` of the analytic null vectors.

    For the eight-parameter subset the report also carries the scalar whose
    vanishing is required for a null vector with nonzero (kI, ki1) entries;
    points where it vanishes are not regular, so it is reported, not judged.
    """
    J = jacobi_matrix(params, x0, subset)
    vecs = null_vectors(params, x0, subset)
    res = tuple(float(np.linalg.norm(J.rows @ v) / np.linalg.norm(v)) for v in vecs)
    s = np.linalg.svd(J.rows, compute_uv=False)
    rank = int(np.sum(s > s[0] * 1e-12)) if s.size and s[0] > 0 else 0
    reg = None
    if subset.lower() == "eight":
        x, P, C = _complete_point(params, x0)
        G, I, i1, i2, H, h1, xi = x
        Ibt = I + C["Ib"]
        a = P["k1"] + P["kI"] * Ibt + P["ki1"] * i1
        reg = float((i1 - Ibt) * a - i1 * (P["m1"] * I - P["m2"] * i1 ** P["p"])
                    + Ibt * (P["m3"] * i1 ** P["q"] - P["m4"] * i2))
    return JacobiReport(J, tuple(vecs), res, rank, reg)
