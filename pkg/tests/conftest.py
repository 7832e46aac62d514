import numpy as np
import pytest

from glucokin.models import Family, ModelSpec, ParamVector, published_params
from glucokin.protocols import HOUR, bolus_protocol


def oracle_rhs(family, P, C, x, ra):
    """Second, independently written evaluation of each vector field."""
    fam = Family.parse(family)
    if fam is Family.COMPLETE:
        G, I, i1, i2, H, h1, xi = x
        return np.array([
            -P["k1"] * G - P["kI"] * (I + C["Ib"]) * G - P["ki1"] * i1 * G
            + P["kH"] * (H + C["Hb"]) * xi + P["rG"] * ra,
            -P["m1"] * I + P["m2"] * i1 ** P["p"],
            -P["m3"] * i1 ** P["q"] + P["m4"] * i2,
            -P["m4"] * i2,
            -P["n"] * H + P["n2"] * h1,
            -P["n1"] * h1,
            -P["x1"] * H * xi + P["x2"] * G * I,
        ])
    if fam is Family.REDUCED:
        G, i1, i2, H, h1, xi = x
        return np.array([
            -P["k1"] * G - P["ki1_bar"] * i1 * G + P["kH_bar"] * (H + C["Hb_bar"]) * xi
            + P["rG"] * ra,
            -P["m3_bar"] * i1 ** P["q"] + i2,
            -P["m4"] * i2,
            -P["n"] * H + h1,
            -P["n1"] * h1,
            -P["x1_bar"] * H * xi + G * i1,
        ])
    if fam is Family.INSULIN_SUB:
        G, I, i1, i2 = x
        return np.array([
            -P["k1"] * G - P["kI"] * (I + C["Ib"]) * G - P["ki1"] * i1 * G + P["rG"] * ra,
            -P["m1"] * I + P["m2"] * i1 ** P["p"],
            -P["m3"] * i1 ** P["q"] + P["m4"] * i2,
            -P["m4"] * i2,
        ])
    G, H, h1, h2, xi = x
    return np.array([
        -P["k1"] * G + P["kH"] * (H + C["Hb"]) * xi,
        -P["n"] * H + P["n2"] * h1 + P["n4"] * h2,
        -P["n1"] * h1,
        -P["n3"] * h2,
        -P["x1"] * H * xi,
    ])


def random_params(rng, family, low=0.2, high=3.0, **constants):
    spec = ModelSpec(Family.parse(family), constants)
    return ParamVector(spec, rng.uniform(low, high, spec.param_count))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def protocol8():
    """8 h, four boluses, raised infusion window."""
    return bolus_protocol(4, 10.0, 2.0, 50.0)


@pytest.fixture
def pig1_reduced():
    return published_params(Family.REDUCED, 1)





def family_case(family, pig=None):
    """Published parameters, an initial state and an 8 h schedule whose
    boluses are valid for ``family``."""
    from glucokin.models import published_pigs
    from glucokin.protocols import steady_infusion
    from glucokin.solver import Bolus, InputSchedule

    fam = Family.parse(family)
    pig = published_pigs(fam)[0] if pig is None else pig
    if fam is Family.REDUCED:
        theta = published_params(fam, pig, Hb_bar=0.005)
        x0 = np.array([8.0, 0.0, 0.0, 0.0, 0.0, 100.0])
    else:
        theta = published_params(fam, pig)
        x0 = theta.model.default_x0(8.0)
    kinds = {
        Family.COMPLETE: ("insulin_ip", "glucagon_ip"),
        Family.REDUCED: ("insulin_ip", "glucagon_ip"),
        Family.INSULIN_SUB: ("insulin_ip", "insulin_ip"),
        Family.GLUCAGON_SUB: ("glucagon_ip", "glucagon_sc"),
    }[fam]
    dose = {"insulin_ip": 8.0, "glucagon_ip": 200.0, "glucagon_sc": 200.0}
    boluses = tuple(Bolus(h * HOUR, kinds[k % 2], dose[kinds[k % 2]])
                    for k, h in enumerate((0.5, 1.5, 4.0, 5.5)))
    ra = steady_infusion(theta, x0) if fam is not Family.GLUCAGON_SUB else 0.0
    sched = InputSchedule((0.0, 8 * HOUR), ((0.0, ra), (4.5 * HOUR, 1.6 * ra), (6 * HOUR, ra)),
                          boluses)
    return theta, x0, sched
