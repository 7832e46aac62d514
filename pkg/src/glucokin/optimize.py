"""Derivative-free simplex search and a projected BFGS, both confined to the
nonnegative orthant.

Both minimizers take a plain ``cost(x) -> float`` over 1-D float arrays and
return an :class:`OptimizeResult`. A cost of ``inf`` (or NaN) marks an
infeasible or divergent point; the simplex simply retreats from it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

Cost = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class OptimizeResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool
    message: str
    initial_fun: float
    # final simplex spread in f (Nelder-Mead) or projected gradient norm (BFGS)
    final_measure: float
    trace: tuple = ()


def _check_start(theta0, nonnegative: bool = True) -> np.ndarray:
    x = np.array(theta0, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("theta0 is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("theta0 must be finite")
    if nonnegative and np.any(x < 0):
        raise ValueError("theta0 must lie in the nonnegative orthant")
    return x


class _Counted:
    """Wraps a cost with the orthant barrier and an evaluation counter."""

    def __init__(self, cost: Cost, nonnegative: bool = True):
        self.cost = cost
        self.calls = 0
        self.nonnegative = nonnegative

    def __call__(self, x: np.ndarray) -> float:
        self.calls += 1
        if self.nonnegative and np.any(x < 0):
            return math.inf
        f = float(self.cost(x))
        return f if f == f else math.inf


def nelder_mead(
    cost: Cost,
    theta0,
    *,
    max_iter: int = 5000,
    tol_f: float = 1e-10,
    tol_x: float = 1e-10,
    initial_scale: float = 0.1,
    nonnegative: bool = True,
    record_trace: bool = False,
) -> OptimizeResult:
    """Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2,
    shrink 1/2).

    The initial simplex perturbs each coordinate by ``initial_scale`` times
    its value (absolute ``initial_scale`` for zero coordinates). Convergence
    is declared when the spread of simplex costs falls below ``tol_f`` or the
    largest vertex distance from the best vertex (sup norm) below ``tol_x``.
    With ``nonnegative`` the cost is ``inf`` outside the orthant.
    """
    x0 = _check_start(theta0, nonnegative)
    f = _Counted(cost, nonnegative)
    n = x0.size
    simplex = np.tile(x0, (n + 1, 1))
    for j in range(n):
        simplex[j + 1, j] += initial_scale * x0[j] if x0[j] != 0 else initial_scale
    values = np.array([f(v) for v in simplex])
    initial_fun = float(values[0])
    trace = []
    converged = False
    message = "maximum iterations reached"
    it = 0
    spread = math.inf
    while it < max_iter:
        order = np.argsort(values, kind="stable")
        simplex = simplex[order]
        values = values[order]
        if record_trace:
            trace.append(float(values[0]))
        spread = float(values[-1] - values[0]) if math.isfinite(values[-1]) else math.inf
        size = float(np.max(np.abs(simplex[1:] - simplex[0])))
        if spread < tol_f:
            converged, message = True, "cost spread below tol_f"
            break
        if size < tol_x:
            converged, message = True, "simplex size below tol_x"
            break
        it += 1
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + (centroid - worst)
        fr = f(xr)
        if fr < values[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = f(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (worst - centroid)
            fc = f(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        best = simplex[0]
        for k in range(1, n + 1):
            simplex[k] = best + 0.5 * (simplex[k] - best)
            values[k] = f(simplex[k])
    k = int(np.argmin(values))
    return OptimizeResult(
        x=simplex[k].copy(), fun=float(values[k]), iterations=it,
        evaluations=f.calls, converged=converged, message=message,
        initial_fun=initial_fun, final_measure=spread, trace=tuple(trace),
    )


def numerical_gradient(f: Cost, x: np.ndarray, fx: float, rel_step: float = 1e-6,
                       lower: float = 0.0) -> np.ndarray:
    """Central differences with step ``rel_step * |x_j|`` (``rel_step`` when
    ``x_j = 0``). Falls back to a one-sided difference where the backward
    point would leave the orthant or either neighbour has infinite cost;
    ``nan`` when both do."""
    g = np.empty_like(x)
    for j in range(x.size):
        h = rel_step * abs(x[j]) if x[j] != 0 else rel_step
        hi = x.copy()
        hi[j] = x[j] + h
        f_hi = f(hi)
        f_lo = math.inf
        if x[j] - h >= lower:
            lo = x.copy()
            lo[j] = x[j] - h
            f_lo = f(lo)
        if math.isfinite(f_hi) and math.isfinite(f_lo):
            g[j] = (f_hi - f_lo) / (2.0 * h)
        elif math.isfinite(f_hi):
            g[j] = (f_hi - fx) / h
        elif math.isfinite(f_lo):
            g[j] = (fx - f_lo) / h
        else:
            g[j] = math.nan
    return g


def _projected_gradient(x: np.ndarray, g: np.ndarray, lower: float = 0.0) -> np.ndarray:
    pg = g.copy()
    pg[(x <= lower) & (g > 0)] = 0.0
    return pg


def quasi_newton(
    cost: Cost,
    theta0,
    *,
    max_iter: int = 5000,
    tol_f: float = 1e-12,
    tol_x: float = 1e-12,
    tol_g: float = 1e-8,
    rel_step: float = 1e-6,
    armijo: float = 1e-4,
    nonnegative: bool = True,
    scale=None,
    record_trace: bool = False,
) -> OptimizeResult:
    """BFGS on the inverse Hessian with numerical gradients, a backtracking
    Armijo line search and projection onto the nonnegative orthant.

    Every line search also tries the minimizer of the quadratic through
    ``f(x)``, the directional slope and ``f(x + d)``, which makes the search
    exact on quadratic costs. ``nonnegative=False`` drops the projection.

    The iteration runs on ``x / scale``. ``scale`` defaults to ``|theta0|``
    (1 for zero entries), which puts parameters of very different magnitude
    on an equal footing; pass ``scale=1.0`` for the unscaled method.
    Gradient steps, tolerances and the trace refer to the scaled variables
    except ``x`` and ``fun`` in the result.
    """
    x_raw = _check_start(theta0, nonnegative)
    if scale is None:
        d_scale = np.where(x_raw != 0, np.abs(x_raw), 1.0)
    else:
        d_scale = np.broadcast_to(np.asarray(scale, dtype=float), x_raw.shape).copy()
        if not np.all(np.isfinite(d_scale)) or np.any(d_scale <= 0):
            raise ValueError("scale must be positive and finite")
    raw = _Counted(cost, nonnegative)
    f = lambda u: raw(u * d_scale)  # noqa: E731
    x = x_raw / d_scale
    lower = 0.0 if nonnegative else -math.inf
    n = x.size
    fx = f(x)
    initial_fun = fx
    if not math.isfinite(fx):
        return OptimizeResult(x_raw, fx, 0, raw.calls, False, "infinite cost at start",
                              initial_fun, math.inf)
    g = numerical_gradient(f, x, fx, rel_step, lower)
    if not np.all(np.isfinite(g)):
        return OptimizeResult(x_raw, fx, 0, raw.calls, False,
                              "gradient undefined at start", initial_fun, math.inf)
    Hinv = np.eye(n)
    trace = []
    converged = False
    message = "maximum iterations reached"
    it = 0
    stalled = 0
    fresh = True
    gnorm = float(np.max(np.abs(_projected_gradient(x, g, lower))))
    while it < max_iter:
        if record_trace:
            trace.append(float(fx))
        gnorm = float(np.max(np.abs(_projected_gradient(x, g, lower))))
        if gnorm <= tol_g * (1.0 + abs(fx)):
            converged, message = True, "projected gradient below tol_g"
            break
        it += 1
        active = (x <= lower) & (g > 0)
        d = -Hinv @ g
        d[active] = 0.0
        slope = float(g @ d)
        if not slope < 0:
            Hinv = np.eye(n)
            d = -_projected_gradient(x, g, lower)
            slope = float(g @ d)
        step = 1.0
        accepted = None
        for _ in range(60):
            xt = np.maximum(x + step * d, lower)
            ft = f(xt)
            if math.isfinite(ft):
                # quadratic model along the ray through (0, fx), slope, (step, ft)
                curv = ft - fx - slope * step
                if curv > 0:
                    # safeguard: a huge trial cost must not collapse the step
                    s_star = max(-slope * step * step / (2.0 * curv), 0.1 * step)
                    if s_star != step:
                        xq = np.maximum(x + s_star * d, lower)
                        fq = f(xq)
                        if fq < ft:
                            xt, ft = xq, fq
                if ft < fx and ft <= fx + armijo * float(g @ (xt - x)):
                    accepted = (xt, ft)
                    break
            step *= 0.5
        if accepted is None:
            if not fresh:
                # retry once along the projected gradient
                Hinv = np.eye(n)
                fresh = True
                continue
            gnorm = float(np.max(np.abs(_projected_gradient(x, g, lower))))
            converged = gnorm <= math.sqrt(tol_g) * (1.0 + abs(fx))
            message = "no decrease along the projected gradient"
            break
        fresh = False
        xn, fn = accepted
        gn = numerical_gradient(f, xn, fn, rel_step, lower)
        if not np.all(np.isfinite(gn)):
            x, fx = xn, fn
            message = "gradient undefined: cost is infinite on both sides of a coordinate"
            break
        s = xn - x
        y = gn - g
        sy = float(s @ y)
        small_step = np.max(np.abs(s)) <= tol_x * (1.0 + np.max(np.abs(x)))
        small_drop = abs(fx - fn) <= tol_f * (1.0 + abs(fx))
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 1:
                Hinv = np.eye(n) * (sy / float(y @ y))
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        x, fx, g = xn, fn, gn
        stalled = stalled + 1 if (small_step and small_drop) else 0
        if stalled >= 3:
            gnorm = float(np.max(np.abs(_projected_gradient(x, g, lower))))
            converged, message = True, "step and cost change below tolerance"
            break
    return OptimizeResult(
        x=x * d_scale, fun=float(fx), iterations=it, evaluations=raw.calls,
        converged=converged, message=message, initial_fun=float(initial_fun),
        final_measure=gnorm, trace=tuple(trace),
    )
