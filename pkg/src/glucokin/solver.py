"""Fixed-step RK4 integration over an experiment's input schedule.

Boluses are Dirac impulses added to the receiving compartment; glucose
infusion is piecewise constant. Every bolus time and infusion breakpoint is
a grid point, so no step straddles a discontinuity.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from glucokin import _kernels as K
from glucokin.models import ModelError, ModelSpec, ParamVector

DEFAULT_STEP = 2e-4  # days, about 17 s
# Extra knots at t_b + step/2**k (k = 1..BOLUS_GRADING) after each bolus. A
# compartment starting from zero under a fractional power (x**q, q < 1) is not
# smooth at the bolus, and RK4 drops to roughly second order on the first step.
BOLUS_GRADING = 6

HORMONES = ("insulin_ip", "glucagon_ip", "glucagon_sc")


class ScheduleError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, time: float):
        super().__init__(f"integration produced a non-finite state at t = {time:.6g} d")
        self.time = time


@dataclass(frozen=True)
class Bolus:
    time: float
    hormone: str
    dose: float


@dataclass(frozen=True)
class InputSchedule:
    """Piecewise-constant IV glucose infusion plus timed hormone boluses.

    ``glucose_infusion`` holds ``(t_start [d], rate [mmol/h])`` pairs; each
    rate holds until the next start. Before the first start the rate is 0.
    """

    horizon: tuple
    glucose_infusion: tuple = ()
    boluses: tuple = ()

    def __post_init__(self):
        t0, tf = (float(v) for v in self.horizon)
        if not (math.isfinite(t0) and math.isfinite(tf) and tf > t0):
            raise ScheduleError(f"invalid horizon {self.horizon}")
        object.__setattr__(self, "horizon", (t0, tf))
        segs = tuple((float(t), float(r)) for t, r in self.glucose_infusion)
        for a, b in zip(segs, segs[1:]):
            if not b[0] > a[0]:
                raise ScheduleError("infusion segment starts must be strictly increasing")
        for t, r in segs:
            if not (math.isfinite(r) and r >= 0):
                raise ScheduleError(f"infusion rate must be >= 0, got {r}")
            if not math.isfinite(t):
                raise ScheduleError("infusion start times must be finite")
        object.__setattr__(self, "glucose_infusion", segs)
        bol = []
        for b in self.boluses:
            if not isinstance(b, Bolus):
                b = Bolus(*b)
            b = Bolus(float(b.time), str(b.hormone), float(b.dose))
            if b.hormone not in HORMONES:
                raise ScheduleError(f"unknown hormone tag {b.hormone!r}")
            if not (math.isfinite(b.dose) and b.dose >= 0):
                raise ScheduleError(f"bolus dose must be >= 0, got {b.dose}")
            if not (t0 <= b.time <= tf):
                raise ScheduleError(f"bolus at t = {b.time} lies outside the horizon {self.horizon}")
            bol.append(b)
        bol.sort(key=lambda b: b.time)
        object.__setattr__(self, "boluses", tuple(bol))

    def rate_at(self, t: float) -> float:
        rate = 0.0
        for start, r in self.glucose_infusion:
            if start <= t:
                rate = r
            else:
                break
        return rate

    def breakpoints(self) -> list:
        t0, tf = self.horizon
        pts = {t0, tf}
        pts.update(t for t, _ in self.glucose_infusion if t0 < t < tf)
        pts.update(b.time for b in self.boluses)
        return sorted(pts)

    def truncated(self, tf: float) -> "InputSchedule":
        """Same protocol restricted to ``[t0, tf]``."""
        t0 = self.horizon[0]
        return InputSchedule(
            (t0, tf),
            self.glucose_infusion,
            tuple(b for b in self.boluses if b.time <= tf),
        )


@dataclass(frozen=True)
class Plan:
    """Pre-resolved integration grid for one (model, schedule, step)."""

    knots: np.ndarray
    nsteps: np.ndarray
    ra: np.ndarray
    force: np.ndarray
    kicks: np.ndarray
    knot_index: np.ndarray  # grid index of every knot


def build_plan(
    spec: ModelSpec,
    schedule: InputSchedule,
    step: float = DEFAULT_STEP,
    extra_knots: Iterable[float] = (),
    pulse_width: float | None = None,
) -> Plan:
    """Resolve the schedule into RK4 segments.

    ``extra_knots`` (e.g. sampling times) become grid points, and the first
    step after every bolus is subdivided geometrically. With
    ``pulse_width`` set, boluses become rectangular pulses of that width and
    height ``dose/width`` instead of impulses.
    """
    if not (step > 0 and math.isfinite(step)):
        raise ScheduleError(f"step must be > 0, got {step}")
    t0, tf = schedule.horizon
    pts = set(schedule.breakpoints())
    for t in extra_knots:
        t = float(t)
        if not (t0 <= t <= tf):
            raise ScheduleError(f"knot {t} outside horizon {schedule.horizon}")
        pts.add(t)
    d = spec.state_dim
    pulses = []
    if pulse_width is not None:
        if not pulse_width > 0:
            raise ScheduleError("pulse width must be > 0")
        for b in schedule.boluses:
            end = min(b.time + pulse_width, tf)
            pts.update((b.time, end))
            pulses.append((b.time, end, spec.bolus_state(b.hormone), b.dose / pulse_width))
    for b in schedule.boluses:
        for k in range(1, BOLUS_GRADING + 1):
            t = b.time + step * 2.0**-k
            if t < tf:
                pts.add(t)
    knots = np.array(sorted(pts))
    nseg = knots.size - 1
    nsteps = np.maximum(1, np.ceil(np.diff(knots) / step - 1e-9)).astype(np.int64)
    ra = np.array([schedule.rate_at(a) for a in knots[:-1]])
    force = np.zeros((nseg, d))
    kicks = np.zeros((knots.size, d))
    if pulse_width is None:
        for b in schedule.boluses:
            k = int(np.searchsorted(knots, b.time))
            kicks[k, spec.bolus_state(b.hormone)] += b.dose
    else:
        for start, end, comp, height in pulses:
            mid = 0.5 * (knots[:-1] + knots[1:])
            force[(mid > start) & (mid < end), comp] += height
    knot_index = np.concatenate(([0], np.cumsum(nsteps)))
    return Plan(knots, nsteps, ra, force, kicks, knot_index)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    model: ModelSpec

    @property
    def glucose(self) -> np.ndarray:
        return self.states[:, 0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t," + ",".join(self.model.state_names) + "\n")
        for t, row in zip(self.times, self.states):
            buf.write(",".join(repr(float(v)) for v in (t, *row)) + "\n")
        return buf.getvalue()


def _check_x0(spec: ModelSpec, x0) -> np.ndarray:
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != spec.state_dim:
        raise ModelError(f"x0 has {x.size} entries, {spec.family.value} needs {spec.state_dim}")
    if not np.all(np.isfinite(x)):
        raise ModelError("x0 must be finite")
    return x


def run_plan(params: ParamVector, x0, plan: Plan) -> Trajectory:
    spec = params.model
    x = _check_x0(spec, x0)
    times, states, bad = K.rk4_path(
        spec.code, x, params.values, spec.constants_array(),
        plan.knots, plan.nsteps, plan.ra, plan.force, plan.kicks,
    )
    if bad >= 0:
        raise DivergenceError(float(times[bad]))
    return Trajectory(times, states, spec)


def integrate(
    model: ModelSpec | None,
    params: ParamVector,
    x0,
    schedule: InputSchedule,
    step: float = DEFAULT_STEP,
    *,
    extra_knots: Iterable[float] = (),
    pulse_width: float | None = None,
) -> Trajectory:
    """Integrate ``params.model`` from ``x0`` over ``schedule``.

    ``model`` may be None (taken from ``params``); if given it must agree.
    """
    if model is not None and model != params.model:
        raise ModelError("model and params disagree")
    plan = build_plan(params.model, schedule, step, extra_knots, pulse_width)
    return run_plan(params, x0, plan)


def interpolate(times: np.ndarray, values: np.ndarray, query) -> np.ndarray:
    """Linear interpolation along axis 0 of ``values`` (any trailing shape)."""
    q = np.asarray(query, dtype=float)
    j = np.clip(np.searchsorted(times, q, side="right") - 1, 0, times.size - 2)
    t0 = times[j]
    t1 = times[j + 1]
    w = (q - t0) / (t1 - t0)
    w = w.reshape(w.shape + (1,) * (values.ndim - 1))
    out = (1.0 - w) * values[j] + w * values[j + 1]
    # exact grid hits return the stored value bit-for-bit
    hit = np.searchsorted(times, q)
    hit = np.clip(hit, 0, times.size - 1)
    exact = times[hit] == q
    out[exact] = values[hit[exact]]
    return out


def output_at(traj: Trajectory, times: Sequence[float]) -> np.ndarray:
    """Glucose at ``times`` by linear interpolation between grid points."""
    q = np.asarray(times, dtype=float)
    lo, hi = traj.times[0], traj.times[-1]
    if q.size and (q.min() < lo or q.max() > hi):
        raise ValueError(f"query times must lie within [{lo}, {hi}]")
    return interpolate(traj.times, traj.glucose, q)
