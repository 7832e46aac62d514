"""Experiment files and result artifacts.

Experiment file format (UTF-8 text, ``#`` starts a comment line)::

    [meta]
    subject_id = pig1
    model_family = reduced
    time_unit = min          # min | h | d, applies to every time column
    horizon_start = 0        # optional, defaults to 0
    horizon_end = 480        # optional, defaults to the latest time in the file

    [glucose]
    t,value
    0,8.1
    ...

    [infusion]               # piecewise-constant IV glucose rate
    t,rate

    [boluses]
    t,hormone,dose           # hormone in insulin_ip | glucagon_ip | glucagon_sc

    [insulin]                # optional hormone assays, t,value
    [glucagon]
    [initial]                # optional initial state, state,value

Only times are converted to days; rates, doses and concentrations are read
as given. Without an ``[initial]`` section the initial state is glucose from
the first measurement, empty hormone compartments and unit sensitivity, which
requires ``model_family``.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from glucokin.estimation import Dataset, FitResult, SplitReport
from glucokin.identifiability import ProfileCurve, SVDReport
from glucokin.models import Family, ModelError, ModelSpec, ParamVector
from glucokin.sensitivity import SensitivityMatrix
from glucokin.solver import HORMONES, Bolus, InputSchedule, ScheduleError, Trajectory

# units per day; times are divided by these on load
TIME_UNITS = {"min": 1440.0, "h": 24.0, "d": 1.0}
_SECTIONS = ("meta", "glucose", "infusion", "boluses", "insulin", "glucagon", "initial")
_HEADERS = {
    "glucose": ("t", "value"),
    "insulin": ("t", "value"),
    "glucagon": ("t", "value"),
    "infusion": ("t", "rate"),
    "boluses": ("t", "hormone", "dose"),
    "initial": ("state", "value"),
}
_META_KEYS = ("subject_id", "model_family", "time_unit", "horizon_start", "horizon_end")


class ExperimentFormatError(ValueError):
    """Malformed experiment file; ``line`` is 1-based (0 when not line-specific)."""

    def __init__(self, message: str, line: int = 0, path: str = ""):
        self.message = message
        self.line = line
        self.path = path
        where = ":".join(x for x in (path, str(line) if line else "") if x)
        super().__init__(f"{where}: {message}" if where else message)


def _fmt(x: float) -> str:
    return repr(float(x))


def _number(text: str, lineno: int, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ExperimentFormatError(f"{what} {text!r} is not a number", lineno) from None
    if not math.isfinite(v):
        raise ExperimentFormatError(f"{what} must be finite", lineno)
    return v


def _split_sections(lines):
    """Yield ``(section, lineno, fields)`` for every data line."""
    section = None
    seen = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise ExperimentFormatError(f"unknown section [{section}]", lineno)
            if section in seen:
                raise ExperimentFormatError(f"duplicate section [{section}]", lineno)
            seen.add(section)
            yield section, lineno, None
            continue
        if section is None:
            raise ExperimentFormatError("data before the first section marker", lineno)
        if section == "meta":
            if "=" not in line:
                raise ExperimentFormatError("meta lines must read 'key = value'", lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            yield section, lineno, (key, value)
        else:
            yield section, lineno, [f.strip() for f in next(csv.reader([line]))]


def parse_experiment(text: str, path: str = "") -> Dataset:
    """Parse experiment-file contents into a :class:`Dataset` (times in days)."""
    try:
        return _parse(text.splitlines())
    except ExperimentFormatError as exc:
        if path and not exc.path:
            raise ExperimentFormatError(exc.message, exc.line, path) from None
        raise


def _parse(lines) -> Dataset:
    meta: dict = {}
    rows: dict = {name: [] for name in _HEADERS}
    header_done: dict = {}
    present = set()
    for section, lineno, fields in _split_sections(lines):
        if fields is None:
            present.add(section)
            continue
        if section == "meta":
            key, value = fields
            if key not in _META_KEYS:
                raise ExperimentFormatError(f"unknown meta key {key!r}", lineno)
            meta[key] = (value, lineno)
            continue
        expected = _HEADERS[section]
        if not header_done.get(section):
            header_done[section] = True
            if tuple(f.lower() for f in fields) == expected:
                continue
            try:
                if section != "initial":
                    float(fields[0])
            except ValueError:
                raise ExperimentFormatError(
                    f"[{section}] header must be {','.join(expected)}", lineno) from None
        if len(fields) != len(expected):
            raise ExperimentFormatError(
                f"[{section}] rows need {len(expected)} fields, got {len(fields)}", lineno)
        rows[section].append((lineno, fields))

    if "glucose" not in present:
        raise ExperimentFormatError("missing [glucose] section")
    unit_text, unit_line = meta.get("time_unit", ("d", 0))
    if unit_text not in TIME_UNITS:
        raise ExperimentFormatError(
            f"time_unit must be one of {sorted(TIME_UNITS)}, got {unit_text!r}", unit_line)
    scale = TIME_UNITS[unit_text]

    def to_days(text, lineno):
        v = _number(text, lineno, "time")
        return v if scale == 1.0 else v / scale

    def series(name, positive):
        out = []
        last = None
        for lineno, (t_text, v_text) in rows[name]:
            t = to_days(t_text, lineno)
            v = _number(v_text, lineno, "value")
            if last is not None and not t > last:
                raise ExperimentFormatError(f"[{name}] times must be strictly increasing", lineno)
            if positive and v <= 0:
                raise ExperimentFormatError(f"[{name}] values must be > 0", lineno)
            last = t
            out.append((t, v))
        return out

    glucose = series("glucose", True)
    if not glucose:
        raise ExperimentFormatError("[glucose] has no measurements")
    insulin = series("insulin", False) if "insulin" in present else None
    glucagon = series("glucagon", False) if "glucagon" in present else None

    infusion = []
    last = None
    for lineno, (t_text, r_text) in rows["infusion"]:
        t = to_days(t_text, lineno)
        r = _number(r_text, lineno, "rate")
        if last is not None and not t > last:
            raise ExperimentFormatError("[infusion] times must be strictly increasing", lineno)
        if r < 0:
            raise ExperimentFormatError("[infusion] rates must be >= 0", lineno)
        last = t
        infusion.append((t, r))

    boluses = []
    for lineno, (t_text, hormone, d_text) in rows["boluses"]:
        t = to_days(t_text, lineno)
        if hormone not in HORMONES:
            raise ExperimentFormatError(
                f"unknown hormone tag {hormone!r} (expected one of {', '.join(HORMONES)})", lineno)
        dose = _number(d_text, lineno, "dose")
        if dose < 0:
            raise ExperimentFormatError("bolus doses must be >= 0", lineno)
        boluses.append((lineno, Bolus(t, hormone, dose)))

    if "horizon_start" in meta:
        t0 = to_days(meta["horizon_start"][0], meta["horizon_start"][1])
    else:
        t0 = 0.0
    if "horizon_end" in meta:
        tf = to_days(meta["horizon_end"][0], meta["horizon_end"][1])
    else:
        times = [t for t, _ in glucose] + [b.time for _, b in boluses]
        times += [t for s in (insulin, glucagon) if s for t, _ in s]
        tf = max(times)
        if not tf > t0:
            raise ExperimentFormatError("cannot infer a horizon; set horizon_end in [meta]")
    for lineno, b in boluses:
        if not t0 <= b.time <= tf:
            raise ExperimentFormatError(f"bolus at t = {b.time} d lies outside the horizon", lineno)
    try:
        schedule = InputSchedule((t0, tf), tuple(infusion), tuple(b for _, b in boluses))
    except ScheduleError as exc:
        raise ExperimentFormatError(str(exc)) from None

    family = None
    if "model_family" in meta:
        try:
            family = Family.parse(meta["model_family"][0])
        except (ValueError, ModelError) as exc:
            raise ExperimentFormatError(str(exc), meta["model_family"][1]) from None
    if "initial" in present:
        named = {}
        for lineno, (name, v_text) in rows["initial"]:
            if name in named:
                raise ExperimentFormatError(f"state {name!r} given twice", lineno)
            named[name] = _number(v_text, lineno, "initial value")
        if family is not None:
            expected = ModelSpec(family).state_names
            if tuple(named) != expected:
                raise ExperimentFormatError(
                    f"[initial] must list the states {', '.join(expected)} in order")
        x0 = np.array(list(named.values()), dtype=float)
    elif family is not None:
        x0 = ModelSpec(family).default_x0(glucose[0][1])
    else:
        raise ExperimentFormatError("need model_family in [meta] or an [initial] section")

    subject = meta.get("subject_id", ("", 0))[0]
    try:
        return Dataset(glucose, schedule, x0, insulin, glucagon, subject)
    except ValueError as exc:
        raise ExperimentFormatError(str(exc)) from None


def load_experiment(path) -> Dataset:
    """Read an experiment file. Errors carry the offending line number."""
    p = Path(path)
    return parse_experiment(p.read_text(encoding="utf-8"), str(p))


def format_experiment(dataset: Dataset, model: ModelSpec | Family | str | None = None) -> str:
    """Experiment-file text for ``dataset`` (times in days, exact floats).

    The initial state is written out in full, so reloading reproduces the
    dataset exactly whatever its initial state.
    """
    family = None
    if model is not None:
        family = model.family if isinstance(model, ModelSpec) else Family.parse(model)
    lines = ["[meta]"]
    if dataset.subject_id:
        lines.append(f"subject_id = {dataset.subject_id}")
    if family is not None:
        lines.append(f"model_family = {family.value}")
    t0, tf = dataset.schedule.horizon
    lines += ["time_unit = d", f"horizon_start = {_fmt(t0)}", f"horizon_end = {_fmt(tf)}", ""]
    lines += ["[glucose]", "t,value"]
    lines += [f"{_fmt(t)},{_fmt(v)}" for t, v in dataset.glucose]
    lines += ["", "[infusion]", "t,rate"]
    lines += [f"{_fmt(t)},{_fmt(r)}" for t, r in dataset.schedule.glucose_infusion]
    lines += ["", "[boluses]", "t,hormone,dose"]
    lines += [f"{_fmt(b.time)},{b.hormone},{_fmt(b.dose)}" for b in dataset.schedule.boluses]
    for name in ("insulin", "glucagon"):
        s = getattr(dataset, name)
        if s is not None:
            lines += ["", f"[{name}]", "t,value"]
            lines += [f"{_fmt(t)},{_fmt(v)}" for t, v in s]
    if family is not None and ModelSpec(family).state_dim == dataset.x0.size:
        names = ModelSpec(family).state_names
    else:
        names = tuple(f"x{k}" for k in range(dataset.x0.size))
    lines += ["", "[initial]", "state,value"]
    lines += [f"{n},{_fmt(v)}" for n, v in zip(names, dataset.x0)]
    return "\n".join(lines) + "\n"


def save_experiment(path, dataset: Dataset, model=None) -> Path:
    p = Path(path)
    p.write_text(format_experiment(dataset, model), encoding="utf-8")
    return p


# ------------------------------------------------------------------ results

def _json_text(obj) -> str:
    if isinstance(obj, (FitResult, ProfileCurve, SVDReport, SplitReport, ParamVector)):
        return obj.to_json()
    if isinstance(obj, dict):
        return json.dumps(obj, indent=2)
    raise TypeError(f"{type(obj).__name__} has no JSON form")


def _csv_text(obj) -> str:
    if isinstance(obj, (Trajectory, ProfileCurve, SensitivityMatrix)):
        return obj.to_csv()
    if isinstance(obj, SVDReport):
        return obj.spectra_csv()
    raise TypeError(f"{type(obj).__name__} has no CSV form")


def save_results(path, obj) -> Path:
    """Write ``obj`` as CSV or JSON according to the suffix of ``path``.

    CSV: Trajectory (``t`` then one column per state), ProfileCurve
    (``grid,value`` then the three flags), SVDReport (singular spectra),
    SensitivityMatrix. JSON: FitResult, ProfileCurve, SVDReport, SplitReport,
    ParamVector and plain dicts.
    """
    p = Path(path)
    suffix = p.suffix.lower()
    if suffix == ".csv":
        text = _csv_text(obj)
    elif suffix == ".json":
        text = _json_text(obj)
        if not text.endswith("\n"):
            text += "\n"
    else:
        raise ValueError(f"cannot infer the format from {p.name!r}; use .csv or .json")
    p.write_text(text, encoding="utf-8")
    return p


_LOADERS = {
    "FitResult": FitResult.from_json,
    "ProfileCurve": ProfileCurve.from_json,
    "SVDReport": SVDReport.from_json,
    "ParamVector": ParamVector.from_json,
    "SplitReport": lambda text: SplitReport.from_dict(json.loads(text)),
}


def load_result(path, kind: str):
    """Read back a JSON artifact written by :func:`save_results`."""
    try:
        loader = _LOADERS[kind]
    except KeyError:
        raise ValueError(f"unknown result kind {kind!r}; expected one of {sorted(_LOADERS)}") from None
    return loader(Path(path).read_text(encoding="utf-8"))


def load_trajectory(path, model: ModelSpec) -> Trajectory:
    """Read a trajectory CSV written by :func:`save_results`."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = ["t", *model.state_names]
        if header != expected:
            raise ValueError(f"trajectory header {header} does not match {expected}")
        data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    data = data.reshape(-1, len(expected))
    return Trajectory(data[:, 0].copy(), data[:, 1:].copy(), model)


def load_params(path) -> ParamVector:
    return ParamVector.from_json(Path(path).read_text(encoding="utf-8"))
