import json
import math

import numpy as np
import pytest

from conftest import oracle_rhs, random_params
from glucokin.models import (
    DomainError,
    Family,
    ModelError,
    ModelSpec,
    ParamVector,
    ReductionError,
    derivative,
    jacobians,
    merge_insulin_states,
    model,
    published_params,
    rescale_complete,
    rhs_complete,
    rhs_glucagon_sub,
    rhs_insulin_sub,
    rhs_reduced,
)
from glucokin.protocols import bolus_protocol
from glucokin.solver import integrate

DIMS = {Family.COMPLETE: (7, 16), Family.REDUCED: (6, 10),
        Family.INSULIN_SUB: (4, 10), Family.GLUCAGON_SUB: (5, 8)}


@pytest.mark.parametrize("family", list(DIMS))
def test_layouts(family):
    spec = ModelSpec(family)
    assert (spec.state_dim, spec.param_count) == DIMS[family]
    assert len(spec.state_names) == spec.state_dim


def test_complete_param_order():
    assert ModelSpec(Family.COMPLETE).param_names == (
        "k1", "kI", "ki1", "kH", "rG", "m1", "m2", "m3", "m4", "p", "q", "n", "n1", "n2",
        "x1", "x2")
    assert ModelSpec(Family.REDUCED).param_names == (
        "k1", "ki1_bar", "kH_bar", "rG", "m3_bar", "m4", "q", "n", "n1", "x1_bar")


def test_zero_state_with_zero_xi_is_stationary():
    th = published_params(Family.COMPLETE, 2)
    assert np.all(rhs_complete(np.zeros(7), th, 0.0) == 0.0)


def test_complete_two_surviving_terms():
    spec = ModelSpec(Family.COMPLETE, {"Hb": 3.0, "Ib": 0.0})
    P = dict.fromkeys(spec.param_names, 0.0)
    P.update(k1=1.0, kH=2.0, p=0.7, q=0.9, m1=4.0, m3=5.0, x1=6.0)
    th = ParamVector.from_mapping(spec, P)
    d = rhs_complete([5, 0, 0, 0, 0, 0, 1], th, 0.0)
    assert d[0] == 1.0


@pytest.mark.parametrize("family,pig", [(Family.COMPLETE, 3), (Family.REDUCED, 1),
                                        (Family.INSULIN_SUB, 3), (Family.GLUCAGON_SUB, 6)])
def test_rhs_matches_independent_evaluator(family, pig):
    consts = {k: 0.7 + i for i, k in enumerate(ModelSpec(family).constant_names)}
    th = published_params(family, pig, **consts)
    x = np.linspace(0.3, 2.1, th.model.state_dim)
    got = derivative(th, x, 12.5)
    ra = 0.0 if family is Family.GLUCAGON_SUB else 12.5
    want = oracle_rhs(family, th.as_dict(), th.model.fixed_constants, x, ra)
    np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-12)


def test_family_wrappers_check_family(pig1_reduced):
    with pytest.raises(ModelError):
        rhs_complete(np.zeros(6), pig1_reduced)
    assert rhs_reduced(np.zeros(6), pig1_reduced).shape == (6,)
    ins = published_params(Family.INSULIN_SUB, 1)
    assert rhs_insulin_sub(np.zeros(4), ins)[0] == 0.0
    glu = published_params(Family.GLUCAGON_SUB, 6)
    assert rhs_glucagon_sub(np.zeros(5), glu).shape == (5,)


def test_reduced_single_term():
    spec = ModelSpec(Family.REDUCED)
    P = dict.fromkeys(spec.param_names, 0.0)
    P.update(q=1.0, m3_bar=2.0)
    d = rhs_reduced([0, 1, 0, 0, 0, 0], ParamVector.from_mapping(spec, P))
    assert d[1] == -2.0


def test_reduced_zero_state_zero_hb():
    th = published_params(Family.REDUCED, 2, Hb_bar=0.0)
    assert np.all(rhs_reduced(np.zeros(6), th) == 0.0)


def test_glucagon_sub_examples():
    th = published_params(Family.GLUCAGON_SUB, 9)
    d = rhs_glucagon_sub([4.0, 3.0, 1.0, 1.0, 0.0], th)
    assert d[0] == -th["k1"] * 4.0
    assert rhs_glucagon_sub([4.0, 0, 0, 0, 1.0], th)[4] == 0.0


def test_linear_limit(rng):
    th = random_params(rng, Family.INSULIN_SUB).replace(p=1.0, q=1.0)
    x = np.array([3.0, 0.4, 1.7, 0.9])
    P = th.as_dict()
    lin = [None, -P["m1"] * x[1] + P["m2"] * x[2], -P["m3"] * x[2] + P["m4"] * x[3]]
    d = derivative(th, x)
    assert d[1] == lin[1] and d[2] == lin[2]


@pytest.mark.parametrize("family", list(Family))
def test_zero_state_is_fixed_point_without_basal_terms(family, rng):
    consts = dict.fromkeys(ModelSpec(family).constant_names, 0.0)
    th = random_params(rng, family, **consts)
    assert np.all(derivative(th, np.zeros(th.model.state_dim)) == 0.0)


def test_domain_errors(pig1_reduced):
    with pytest.raises(DomainError):
        derivative(pig1_reduced, [1, -0.5, 0, 0, 0, 1])
    # round-off sized negatives are clamped
    derivative(pig1_reduced, [1, -1e-12, 0, 0, 0, 1])
    with pytest.raises(ModelError):
        derivative(pig1_reduced, np.zeros(5))
    with pytest.raises(ModelError):
        derivative(pig1_reduced, np.zeros(6), -1.0)


def test_param_vector_validation():
    spec = ModelSpec(Family.REDUCED)
    with pytest.raises(ModelError):
        ParamVector(spec, np.ones(9))
    with pytest.raises(ModelError):
        ParamVector(spec, -np.ones(10))
    with pytest.raises(ModelError):
        ParamVector(spec, np.r_[np.ones(6), 0.0, np.ones(3)])  # q = 0
    with pytest.raises(ModelError):
        ModelSpec(Family.REDUCED, {"Ib": 1.0})


def test_param_json_round_trip():
    th = published_params(Family.COMPLETE, 4, Ib=0.3, Hb=7.0)
    doc = json.loads(th.to_json())
    assert set(doc) == {"family", "params", "constants"}
    assert ParamVector.from_json(th.to_json()) == th


def test_jacobians_against_differences(rng):
    for family in Family:
        th = random_params(rng, family)
        x = rng.uniform(0.5, 2.0, th.model.state_dim)
        jx, jt = jacobians(th, x, 3.0)
        h = 1e-6
        for k in range(x.size):
            e = np.zeros_like(x)
            e[k] = h
            fd = (derivative(th, x + e, 3.0) - derivative(th, x - e, 3.0)) / (2 * h)
            np.testing.assert_allclose(jx[:, k], fd, rtol=1e-6, atol=1e-7)
        for j in range(th.values.size):
            up = th.values.copy()
            dn = th.values.copy()
            up[j] += h
            dn[j] -= h
            fd = (derivative(th.with_values(up), x, 3.0)
                  - derivative(th.with_values(dn), x, 3.0)) / (2 * h)
            np.testing.assert_allclose(jt[:, j], fd, rtol=1e-6, atol=1e-7)


def test_rescale_identity_when_unit_couplings():
    th = published_params(Family.COMPLETE, 1).replace(m2=1.0, n2=1.0, x2=1.0, m4=1.0)
    new, smap = rescale_complete(th)
    assert np.all(smap.factors == 1.0)
    P, Q = th.as_dict(), new.as_dict()
    assert Q["kI_bar"] == P["kI"] and Q["kH_bar"] == P["kH"] and Q["x1_bar"] == P["x1"]


def test_rescale_pig5_kH_bar():
    th = published_params(Family.COMPLETE, 5)
    new, _ = rescale_complete(th)
    assert new["kH_bar"] == pytest.approx(0.40 * 0.00214 * 294.52 * 12.71, rel=1e-14)


def test_rescale_rejects_zero_divisor():
    with pytest.raises(ReductionError):
        rescale_complete(published_params(Family.COMPLETE, 1).replace(n2=0.0))


def test_rescale_output_invariance(rng):
    sched = bolus_protocol(8, 5.0, 1.0, 30.0)
    for _ in range(3):
        th = random_params(rng, Family.COMPLETE, low=0.3, high=4.0, Ib=0.5, Hb=2.0)
        x0 = np.array([6.0, 0.2, 0.1, 0.0, 0.3, 0.0, 1.0])
        new, smap = rescale_complete(th)
        a = integrate(None, th, x0, sched).glucose
        b = integrate(None, new, smap.forward(x0), sched).glucose
        assert np.max(np.abs(a - b) / np.abs(a)) < 1e-10


def test_merge_layout_and_values():
    th = published_params(Family.COMPLETE, 1)
    res = merge_insulin_states(th)
    assert res.params.names == ModelSpec(Family.REDUCED).param_names
    assert res.params["ki1_bar"] == pytest.approx(3.87 * 76.92, rel=1e-14)
    assert res.output_preserving is False
    assert np.all(res.params.values >= 0)
    assert res.reduce_state(np.arange(7.0)).tolist() == [0, 2, 3, 4, 5, 6]


def test_model_factory_and_parse():
    assert model("reduced", Hb_bar=0.1).fixed_constants["Hb_bar"] == 0.1
    assert Family.parse("Complete") is Family.COMPLETE
    with pytest.raises(ValueError):
        Family.parse("nonsense")
    assert math.isclose(ModelSpec(Family.COMPLETE).default_x0(7.0)[6], 1.0)
