"""Model families, parameter layouts, right-hand sides and the exact maps
from the complete bihormonal model to its rescaled and reduced forms.

Time is in days throughout. Glucose ``G`` is in mmol/L; hormone states are
dimensionless except where a submodel is calibrated against hormone assays
(``I`` in mU/L for the insulin submodel, ``H`` in pmol/L for the glucagon
submodel).
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from glucokin import _kernels as K


class ModelError(ValueError):
    """Invalid model, parameter or state input."""


class DomainError(ModelError):
    """A fractional power was applied to a negative state."""


class Family(enum.Enum):
    COMPLETE = "complete"
    REDUCED = "reduced"
    INSULIN_SUB = "insulin_sub"
    GLUCAGON_SUB = "glucagon_sub"
    RESCALED_COMPLETE = "rescaled_complete"

    @classmethod
    def parse(cls, value: "Family | str") -> "Family":
        if isinstance(value, Family):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"insulin": "insulin_sub", "glucagon": "glucagon_sub",
                   "rescaled": "rescaled_complete"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ModelError(f"unknown model family {value!r}") from None


_CODES = {
    Family.COMPLETE: K.COMPLETE,
    Family.REDUCED: K.REDUCED,
    Family.INSULIN_SUB: K.INSULIN_SUB,
    Family.GLUCAGON_SUB: K.GLUCAGON_SUB,
    Family.RESCALED_COMPLETE: K.RESCALED,
}

_STATES = {
    Family.COMPLETE: ("G", "I", "i1", "i2", "H", "h1", "xi"),
    Family.REDUCED: ("G", "i1_bar", "i2", "H_bar", "h1", "xi_bar"),
    Family.INSULIN_SUB: ("G", "I", "i1", "i2"),
    Family.GLUCAGON_SUB: ("G", "H", "h1", "h2", "xi"),
    Family.RESCALED_COMPLETE: ("G", "I_bar", "i1_bar", "i2", "H_bar", "h1", "xi_bar"),
}

_PARAMS = {
    Family.COMPLETE: ("k1", "kI", "ki1", "kH", "rG", "m1", "m2", "m3", "m4",
                      "p", "q", "n", "n1", "n2", "x1", "x2"),
    Family.REDUCED: ("k1", "ki1_bar", "kH_bar", "rG", "m3_bar", "m4", "q",
                     "n", "n1", "x1_bar"),
    Family.INSULIN_SUB: ("k1", "kI", "ki1", "rG", "m1", "m2", "m3", "m4", "p", "q"),
    Family.GLUCAGON_SUB: ("k1", "kH", "n", "n1", "n2", "n3", "n4", "x1"),
    Family.RESCALED_COMPLETE: ("k1", "kI_bar", "ki1_bar", "kH_bar", "rG", "m1",
                               "m2_bar", "m3_bar", "m4", "p", "q", "n", "n1",
                               "x1_bar"),
}

_CONSTANTS = {
    Family.COMPLETE: ("Ib", "Hb"),
    Family.REDUCED: ("Hb_bar",),
    Family.INSULIN_SUB: ("Ib",),
    Family.GLUCAGON_SUB: ("Hb",),
    Family.RESCALED_COMPLETE: ("Ib_bar", "Hb_bar"),
}

# power-law exponents; must stay strictly positive
_POWERS = frozenset({"p", "q"})

# (hormone, route) -> state name receiving the bolus
_BOLUS_TARGET = {
    Family.COMPLETE: {"insulin_ip": "i2", "glucagon_ip": "h1"},
    Family.RESCALED_COMPLETE: {"insulin_ip": "i2", "glucagon_ip": "h1"},
    Family.REDUCED: {"insulin_ip": "i2", "glucagon_ip": "h1"},
    Family.INSULIN_SUB: {"insulin_ip": "i2"},
    Family.GLUCAGON_SUB: {"glucagon_ip": "h1", "glucagon_sc": "h2"},
}

# states that carry the glucagon-sensitivity role (default initial value 1)
_SENSITIVITY_STATES = frozenset({"xi", "xi_bar"})


@dataclass(frozen=True)
class ModelSpec:
    """One model family with its state layout, parameter layout and the
    fixed (non-estimated) basal constants."""

    family: Family
    fixed_constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        fam = Family.parse(self.family)
        object.__setattr__(self, "family", fam)
        names = _CONSTANTS[fam]
        merged = {k: 1.0 for k in names}
        for k, v in dict(self.fixed_constants).items():
            if k not in names:
                raise ModelError(f"{fam.value} has no constant {k!r} (expected {names})")
            v = float(v)
            if not math.isfinite(v) or v < 0:
                raise ModelError(f"constant {k} must be finite and >= 0, got {v}")
            merged[k] = v
        object.__setattr__(self, "fixed_constants", MappingProxyType(merged))

    @property
    def code(self) -> int:
        return _CODES[self.family]

    @property
    def state_names(self) -> tuple:
        return _STATES[self.family]

    @property
    def state_dim(self) -> int:
        return len(_STATES[self.family])

    @property
    def param_names(self) -> tuple:
        return _PARAMS[self.family]

    @property
    def param_count(self) -> int:
        return len(_PARAMS[self.family])

    @property
    def constant_names(self) -> tuple:
        return _CONSTANTS[self.family]

    def constants_array(self) -> np.ndarray:
        return np.array([self.fixed_constants[k] for k in self.constant_names], dtype=float)

    def with_constants(self, **values: float) -> "ModelSpec":
        merged = dict(self.fixed_constants)
        merged.update(values)
        return ModelSpec(self.family, merged)

    def bolus_state(self, hormone: str) -> int:
        """Index of the compartment receiving a bolus of ``hormone``."""
        try:
            name = _BOLUS_TARGET[self.family][hormone]
        except KeyError:
            raise ModelError(
                f"{hormone} boluses are not valid for the {self.family.value} model"
            ) from None
        return self.state_names.index(name)

    def default_x0(self, glucose: float) -> np.ndarray:
        """Glucose from data, hormone compartments empty, sensitivity 1."""
        x0 = np.zeros(self.state_dim)
        x0[0] = glucose
        for k, name in enumerate(self.state_names):
            if name in _SENSITIVITY_STATES:
                x0[k] = 1.0
        return x0

    def to_dict(self) -> dict:
        return {"family": self.family.value, "constants": dict(self.fixed_constants)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(Family.parse(d["family"]), d.get("constants", {}))

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return (self.family is other.family
                and dict(self.fixed_constants) == dict(other.fixed_constants))

    def __hash__(self):
        return hash((self.family, tuple(sorted(self.fixed_constants.items()))))


def model(family: "Family | str", **constants: float) -> ModelSpec:
    return ModelSpec(Family.parse(family), constants)


@dataclass(frozen=True)
class ParamVector:
    """Nonnegative parameter values ordered as ``model.param_names``."""

    model: ModelSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != self.model.param_count:
            raise ModelError(
                f"{self.model.family.value} expects {self.model.param_count} "
                f"parameters, got {v.size}"
            )
        if not np.all(np.isfinite(v)):
            raise ModelError("parameters must be finite")
        bad = [n for n, x in zip(self.model.param_names, v) if x < 0]
        if bad:
            raise ModelError(f"negative parameters: {bad}")
        bad = [n for n, x in zip(self.model.param_names, v) if n in _POWERS and x <= 0]
        if bad:
            raise ModelError(f"power exponents must be > 0: {bad}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_mapping(cls, spec: ModelSpec, params: Mapping[str, float]) -> "ParamVector":
        missing = [n for n in spec.param_names if n not in params]
        extra = [n for n in params if n not in spec.param_names]
        if missing or extra:
            raise ModelError(f"parameter names mismatch: missing={missing} extra={extra}")
        return cls(spec, np.array([params[n] for n in spec.param_names], dtype=float))

    @property
    def names(self) -> tuple:
        return self.model.param_names

    def as_dict(self) -> dict:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def replace(self, **updates: float) -> "ParamVector":
        v = self.values.copy()
        for k, x in updates.items():
            v[self.names.index(k)] = x
        return ParamVector(self.model, v)

    def with_values(self, values: Sequence[float]) -> "ParamVector":
        return ParamVector(self.model, np.asarray(values, dtype=float))

    def to_json(self) -> str:
        doc = {
            "family": self.model.family.value,
            "params": self.as_dict(),
            "constants": dict(self.model.fixed_constants),
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ParamVector":
        doc = json.loads(text)
        try:
            spec = ModelSpec(Family.parse(doc["family"]), doc.get("constants", {}))
            return cls.from_mapping(spec, doc["params"])
        except KeyError as exc:
            raise ModelError(f"parameter document lacks {exc}") from None

    def __eq__(self, other):
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.model == other.model and np.array_equal(self.values, other.values)

    __hash__ = None


# ---------------------------------------------------------------- presets
# Published calibrations. Complete: Pigs 1-5; reduced: Pigs 1-5;
# insulin submodel: Pigs 1-3; glucagon submodel: Pigs 6, 9, 11.

_COMPLETE_TABLE = {
    1: (8.24, 0.0001, 3.87, 0.083, 3.73, 94.56, 13.97, 19.63, 76.92, 0.92, 0.57,
        149.15, 177.95, 217.95, 1.42, 0.00001),
    2: (22.29, 1.05, 2.36, 0.28, 2.80, 86.58, 19.31, 17.17, 83.49, 0.91, 0.60,
        175.38, 192.26, 194.52, 1.04, 0.00001),
    3: (8.21, 0.023, 2.62, 0.21, 2.41, 94.00, 211.92, 16.80, 70.65, 0.93, 0.61,
        156.11, 171.29, 213.71, 0.32, 0.000001),
    4: (41.54, 22.21, 17.06, 0.23, 11.20, 2.03, 11.80, 12.28, 9.17, 1.18, 0.77,
        49.42, 41.92, 149.85, 0.00001, 0.00105),
    5: (14.93, 62.66, 0.0638, 0.40, 3.33, 24.52, 12.71, 23.59, 20.75, 0.82, 1.10,
        119.63, 1002.72, 294.52, 2.02, 0.00214),
}

_REDUCED_TABLE = {
    1: (13.79, 171.68, 38.50, 4.73, 4.83, 27.84, 0.48, 110.34, 138.95, 237.39),
    2: (21.56, 168.68, 44.02, 2.79, 2.33, 85.05, 0.81, 177.30, 200.09, 196.85),
    3: (7.41, 181.79, 33.20, 2.21, 4.38, 64.96, 0.52, 142.24, 177.44, 102.37),
    4: (0.98, 115.36, 28.63, 1.77, 8.74, 9.49, 0.96, 37.85, 38.52, 0.0014),
    5: (3.92, 185.46, 655.46, 1.73, 37.89, 12.30, 1.37, 709.33, 2152.87, 3392.80),
}

# reported fit MSE per pig for the reduced model; sqrt gives a noise level
REDUCED_MSE = {1: 0.30, 2: 0.54, 3: 0.36, 4: 3.45, 5: 0.25}
COMPLETE_MSE = {1: 0.63, 2: 0.69, 3: 0.41, 4: 3.92, 5: 0.35}

_INSULIN_TABLE = {
    1: (0.0062, 0.82, 0.09, 0.61, 58.02, 0.05, 146.65, 381.56, 2.56, 0.90),
    2: (0.55, 0.51, 0.10, 0.98, 497.52, 0.0004, 0.0002, 900.18, 2.99, 3.02),
    3: (0.74, 0.000002, 0.08, 1.84, 9.43, 0.00199, 0.00246, 107.70, 1.65, 1.54),
}

_GLUCAGON_TABLE = {
    6: (11.54, 16.84, 59.41, 561.17, 4438.52, 41.00, 279.83, 0.53),
    9: (11.43, 23.68, 36.05, 568.98, 1912.86, 257.62, 1019.12, 0.80),
    11: (3.75, 5.32, 212.79, 11.54, 467.40, 1314.97, 16016.44, 1.064),
}

_TABLES = {
    Family.COMPLETE: _COMPLETE_TABLE,
    Family.REDUCED: _REDUCED_TABLE,
    Family.INSULIN_SUB: _INSULIN_TABLE,
    Family.GLUCAGON_SUB: _GLUCAGON_TABLE,
}


def published_params(family: "Family | str", pig: int, **constants: float) -> ParamVector:
    """Parameter set reported for one animal, optionally with basal constants."""
    fam = Family.parse(family)
    try:
        row = _TABLES[fam][pig]
    except KeyError:
        raise ModelError(f"no published {fam.value} parameters for pig {pig}") from None
    return ParamVector(ModelSpec(fam, constants), np.array(row, dtype=float))


def published_pigs(family: "Family | str") -> tuple:
    return tuple(sorted(_TABLES[Family.parse(family)]))


# ------------------------------------------------------------ derivatives

def _check_state(spec: ModelSpec, state) -> np.ndarray:
    x = np.asarray(state, dtype=float).reshape(-1)
    if x.size != spec.state_dim:
        raise ModelError(f"{spec.family.value} state has {spec.state_dim} entries, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ModelError("state entries must be finite")
    return x


def _powered_states(spec: ModelSpec) -> tuple:
    if spec.family in (Family.COMPLETE, Family.RESCALED_COMPLETE, Family.INSULIN_SUB):
        return (2,)
    if spec.family is Family.REDUCED:
        return (1,)
    return ()


def derivative(params: ParamVector, state, ra_g: float = 0.0, *, tol: float = 1e-9) -> np.ndarray:
    """dx/dt for ``params.model`` at ``state`` with glucose infusion ``ra_g`` [mmol/h].

    Bolus inputs are not part of the vector field; the integrator applies
    them as impulses. Entries feeding a fractional power may be negative by
    at most ``tol`` (solver round-off, clamped to 0); anything more negative
    raises :class:`DomainError`.
    """
    spec = params.model
    x = _check_state(spec, state)
    if ra_g < 0 or not math.isfinite(ra_g):
        raise ModelError(f"glucose infusion must be finite and >= 0, got {ra_g}")
    powers = {n: params[n] for n in ("p", "q") if n in params.names}
    fractional = any(v != 1.0 for v in powers.values())
    for k in _powered_states(spec):
        if fractional and x[k] < -tol:
            raise DomainError(
                f"state {spec.state_names[k]} = {x[k]:g} < 0 under a fractional power"
            )
    out = np.empty(spec.state_dim)
    K.rhs(spec.code, x, params.values, spec.constants_array(), float(ra_g), out)
    return out


def _require(params: ParamVector, family: Family) -> None:
    if params.model.family is not family:
        raise ModelError(f"expected {family.value} parameters, got {params.model.family.value}")


def rhs_complete(state, params: ParamVector, ra_g: float = 0.0) -> np.ndarray:
    _require(params, Family.COMPLETE)
    return derivative(params, state, ra_g)


def rhs_reduced(state, params: ParamVector, ra_g: float = 0.0) -> np.ndarray:
    _require(params, Family.REDUCED)
    return derivative(params, state, ra_g)


def rhs_insulin_sub(state, params: ParamVector, ra_g: float = 0.0) -> np.ndarray:
    _require(params, Family.INSULIN_SUB)
    return derivative(params, state, ra_g)


def rhs_glucagon_sub(state, params: ParamVector, ra_g: float = 0.0) -> np.ndarray:
    # no glucose infusion term in this submodel; ra_g is accepted and ignored
    _require(params, Family.GLUCAGON_SUB)
    return derivative(params, state, ra_g)


def jacobians(params: ParamVector, state, ra_g: float = 0.0):
    """Analytic (df/dx, df/dtheta) at ``state``."""
    spec = params.model
    x = _check_state(spec, state)
    jx = np.empty((spec.state_dim, spec.state_dim))
    jt = np.empty((spec.state_dim, spec.param_count))
    K.jac(spec.code, x, params.values, spec.constants_array(), float(ra_g), jx, jt)
    return jx, jt


# ------------------------------------------------------------ reductions

@dataclass(frozen=True)
class StateMap:
    """Diagonal change of variables ``x_new = x_old * factors``."""

    source: ModelSpec
    target: ModelSpec
    factors: np.ndarray

    def forward(self, state) -> np.ndarray:
        return np.asarray(state, dtype=float) * self.factors

    def inverse(self, state) -> np.ndarray:
        return np.asarray(state, dtype=float) / self.factors


class ReductionError(ModelError):
    """A rescaling divisor is zero."""


def rescale_complete(params: ParamVector):
    """Exact output-preserving rescaling of the complete model.

    Returns ``(ParamVector, StateMap)`` for the rescaled-complete family:

    - ``kI_bar = kI*m2``, ``Ib_bar = Ib/m2``, ``ki1_bar = ki1*m4``,
      ``kH_bar = kH*x2*n2*m2``, ``Hb_bar = Hb/n2``, ``x1_bar = x1*n2``,
      ``m3_bar = m3*m4**(q-1)``, ``m2_bar = m4**p``
    - ``I_bar = I/m2``, ``i1_bar = i1/m4``, ``H_bar = H/n2``,
      ``xi_bar = xi/(x2*m2)``

    The glucose trajectory of the rescaled system equals the original one.
    """
    _require(params, Family.COMPLETE)
    P = params.as_dict()
    for key in ("m2", "n2", "x2", "m4"):
        if P[key] <= 0:
            raise ReductionError(f"{key} must be > 0 to rescale, got {P[key]}")
    Ib = params.model.fixed_constants["Ib"]
    Hb = params.model.fixed_constants["Hb"]
    m2, n2, x2, m4, p, q = P["m2"], P["n2"], P["x2"], P["m4"], P["p"], P["q"]
    spec = ModelSpec(Family.RESCALED_COMPLETE, {"Ib_bar": Ib / m2, "Hb_bar": Hb / n2})
    new = ParamVector.from_mapping(spec, {
        "k1": P["k1"],
        "kI_bar": P["kI"] * m2,
        "ki1_bar": P["ki1"] * m4,
        "kH_bar": P["kH"] * x2 * n2 * m2,
        "rG": P["rG"],
        "m1": P["m1"],
        "m2_bar": m4 ** p,
        "m3_bar": P["m3"] * m4 ** (q - 1.0),
        "m4": m4,
        "p": p,
        "q": q,
        "n": P["n"],
        "n1": P["n1"],
        "x1_bar": P["x1"] * n2,
    })
    factors = np.array([1.0, 1.0 / m2, 1.0 / m4, 1.0, 1.0 / n2, 1.0, 1.0 / (x2 * m2)])
    return new, StateMap(params.model, spec, factors)


@dataclass(frozen=True)
class MergeResult:
    """Reduced-model parameters obtained by dropping blood insulin.

    ``output_preserving`` is always False: removing the ``I`` compartment
    changes the glucose trajectory.
    """

    params: ParamVector
    dropped: tuple
    output_preserving: bool = False

    def reduce_state(self, state) -> np.ndarray:
        x = np.asarray(state, dtype=float)
        return np.delete(x, 1)


def merge_insulin_states(params: ParamVector) -> MergeResult:
    """Keep ``i1_bar``, drop ``I_bar`` and use ``i1_bar`` in the sensitivity
    restoration term. Accepts rescaled-complete (or complete, rescaled first)
    parameters and returns the 10-parameter reduced layout."""
    if params.model.family is Family.COMPLETE:
        params, _ = rescale_complete(params)
    _require(params, Family.RESCALED_COMPLETE)
    P = params.as_dict()
    spec = ModelSpec(Family.REDUCED, {"Hb_bar": params.model.fixed_constants["Hb_bar"]})
    reduced = ParamVector.from_mapping(spec, {
        "k1": P["k1"],
        "ki1_bar": P["ki1_bar"],
        "kH_bar": P["kH_bar"],
        "rG": P["rG"],
        "m3_bar": P["m3_bar"],
        "m4": P["m4"],
        "q": P["q"],
        "n": P["n"],
        "n1": P["n1"],
        "x1_bar": P["x1_bar"],
    })
    return MergeResult(reduced, dropped=("I_bar", "kI_bar", "Ib_bar", "m1", "m2_bar", "p"))
