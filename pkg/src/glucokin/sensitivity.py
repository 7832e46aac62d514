"""Parameter-to-output sensitivities of the glucose output.

The forward system ``dS/dt = (df/dx) S + df/dtheta`` is integrated alongside
the state with the same RK4 grid; the glucose row of ``S`` is the output
sensitivity since the output map is ``y = G``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from glucokin import _kernels as K
from glucokin.models import ModelError, ModelSpec, ParamVector
from glucokin.solver import (
    DEFAULT_STEP,
    DivergenceError,
    InputSchedule,
    build_plan,
    integrate,
    interpolate,
    output_at,
)

DEFAULT_DELTA = 0.004  # days between sensitivity rows


@dataclass(frozen=True)
class SensitivityMatrix:
    """``rows[i, j] = dG(times[i]) / dtheta_j`` at ``params``."""

    rows: np.ndarray
    times: np.ndarray
    params: ParamVector

    @property
    def delta(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t," + ",".join(self.params.names) + "\n")
        for t, row in zip(self.times, self.rows):
            buf.write(",".join(repr(float(v)) for v in (t, *row)) + "\n")
        return buf.getvalue()


def sensitivity_rhs(params: ParamVector, state, X_theta, ra_g: float = 0.0):
    """Augmented derivative ``(dx/dt, dX_theta/dt)`` at one point."""
    spec = params.model
    x = np.asarray(state, dtype=float).reshape(-1)
    S = np.asarray(X_theta, dtype=float)
    if x.size != spec.state_dim or S.shape != (spec.state_dim, spec.param_count):
        raise ModelError(
            f"expected state ({spec.state_dim},) and X_theta "
            f"({spec.state_dim}, {spec.param_count}); got {x.shape}, {S.shape}"
        )
    dx = np.empty(spec.state_dim)
    dS = np.empty_like(S)
    jx = np.empty((spec.state_dim, spec.state_dim))
    jt = np.empty_like(S)
    force = np.zeros(spec.state_dim)
    K._sens_rhs(spec.code, x, S, params.values, spec.constants_array(),
                float(ra_g), force, dx, dS, jx, jt)
    return dx, dS


def sensitivity_grid(schedule: InputSchedule, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Equidistant points ``t0, t0+delta, ...`` not exceeding the horizon end."""
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    t0, tf = schedule.horizon
    count = int(math.floor((tf - t0) / delta + 1e-9)) + 1
    return t0 + delta * np.arange(count)


def forward_sensitivities(params: ParamVector, x0, schedule: InputSchedule,
                          times, step: float = DEFAULT_STEP):
    """Full state sensitivities at ``times``; shape (len(times), d, m).

    Also returns the states at ``times``.
    """
    spec = params.model
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != spec.state_dim:
        raise ModelError(f"x0 has {x.size} entries, expected {spec.state_dim}")
    times = np.asarray(times, dtype=float)
    plan = build_plan(spec, schedule, step, extra_knots=times)
    tt, xs, ss, bad = K.rk4_sens_path(
        spec.code, x, params.values, spec.constants_array(),
        plan.knots, plan.nsteps, plan.ra, plan.force, plan.kicks,
    )
    if bad >= 0:
        raise DivergenceError(float(tt[bad]))
    return interpolate(tt, xs, times), interpolate(tt, ss, times)


def assemble_sensitivity_matrix(
    model: ModelSpec | None,
    params: ParamVector,
    x0,
    schedule: InputSchedule,
    delta: float = DEFAULT_DELTA,
    step: float = DEFAULT_STEP,
) -> SensitivityMatrix:
    """Glucose sensitivities on the equidistant ``delta`` grid over the horizon."""
    if model is not None and model != params.model:
        raise ModelError("model and params disagree")
    times = sensitivity_grid(schedule, delta)
    _, sens = forward_sensitivities(params, x0, schedule, times, step)
    return SensitivityMatrix(np.ascontiguousarray(sens[:, 0, :]), times, params)


def finite_difference_sensitivity(
    model: ModelSpec | None,
    params: ParamVector,
    x0,
    schedule: InputSchedule,
    times,
    rel_step: float = 1e-5,
    step: float = DEFAULT_STEP,
) -> np.ndarray:
    """Central differences of the simulated glucose w.r.t. each parameter.

    Uses ``theta_j * (1 +- h)``; a zero parameter is perturbed by ``+-h``
    absolutely (clipped at 0 for one-sided feasibility).
    """
    if not 0 < rel_step < 1:
        raise ValueError("rel_step must lie in (0, 1)")
    if model is not None and model != params.model:
        raise ModelError("model and params disagree")
    times = np.asarray(times, dtype=float)
    base = params.values
    out = np.empty((times.size, base.size))
    for j in range(base.size):
        if base[j] != 0.0:
            lo_v = base[j] * (1.0 - rel_step)
            hi_v = base[j] * (1.0 + rel_step)
        else:
            lo_v, hi_v = 0.0, rel_step
        hi = base.copy()
        lo = base.copy()
        hi[j] = hi_v
        lo[j] = lo_v
        g_hi = output_at(integrate(None, params.with_values(hi), x0, schedule, step,
                                   extra_knots=times), times)
        g_lo = output_at(integrate(None, params.with_values(lo), x0, schedule, step,
                                   extra_knots=times), times)
        out[:, j] = (g_hi - g_lo) / (hi_v - lo_v)
    return out
