import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from horbit.errors import InvalidInputError, PoisonedEstimateError
from horbit.quadrature import (Atoms, IntegralEstimate, IntegrationScheme, ball_factor,
                               ball_volume, box_factor, combine_independent, cyclic_elements,
                               euler_zyz, haar_factor, integrate, integrate_scalar,
                               product_nodes, rotation_x, slab_ball_factor)

DET = IntegrationScheme(kind="tensor", nodes=12)
QMC = IntegrationScheme(kind="qmc", budget=2 ** 14, seed=5)


def test_scheme_validation():
    with pytest.raises(InvalidInputError):
        IntegrationScheme(budget=0)
    with pytest.raises(InvalidInputError):
        IntegrationScheme(kind="simpson")
    with pytest.raises(InvalidInputError):
        IntegrationScheme(kind="qmc", batches=1)
    assert IntegrationScheme(kind="TensorGauss").deterministic


def test_tensor_rule_exact_on_polynomial():
    f = [box_factor("x", [0.0, -1.0], [1.0, 2.0])]
    est = integrate_scalar(f, lambda c: c["x"][:, 0] ** 2 * c["x"][:, 1] ** 3, DET)
    assert est.value == pytest.approx(1.25, rel=1e-13)
    assert est.std_error == 0.0


@pytest.mark.parametrize("dim", [1, 2, 3, 4])
def test_ball_volume(dim):
    f = [ball_factor("v", dim, np.full(dim, 0.3), 0.7, nodes=16 if dim < 4 else 40)]
    det = integrate_scalar(f, lambda c: np.ones(len(c["v"])), DET)
    want = float(ball_volume(dim, 0.7))
    assert det.value == pytest.approx(want, rel=1e-12 if dim < 4 else 2e-2)
    rnd = integrate_scalar(f, lambda c: np.ones(len(c["v"])), QMC)
    assert abs(rnd.value - want) <= max(5 * rnd.std_error, 1e-12)


def test_ball_second_moment_in_3d():
    # int_{|v|<R} |v|^2 dv = 4 pi R^5 / 5
    f = [ball_factor("v", 3, np.zeros(3), 1.3)]
    est = integrate_scalar(f, lambda c: (c["v"] ** 2).sum(-1), DET)
    assert est.value == pytest.approx(4 * math.pi * 1.3 ** 5 / 5, rel=1e-12)


def test_conditional_ball_radius():
    # int_0^1 area(B(0, s)) ds = pi / 3
    f = [box_factor("s", [0.0], [1.0]), ball_factor("v", 2, np.zeros(2), lambda c: c["s"][:, 0])]
    est = integrate_scalar(f, lambda c: np.ones(len(c["s"])), DET)
    assert est.value == pytest.approx(math.pi / 3, rel=1e-12)


def _unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def test_slab_ball_is_a_spherical_cap():
    d = _unit([0.3, -0.4, 0.5])
    f = [slab_ball_factor("v", 3, np.zeros(3), 1.0, d, 0.5, 2.0, nodes=16)]
    est = integrate_scalar(f, lambda c: np.ones(len(c["v"])), DET)
    h = 0.5
    assert est.value == pytest.approx(math.pi * h * h * (3 - h) / 3, rel=1e-12)


def test_slab_ball_segment_in_2d():
    f = [slab_ball_factor("v", 2, np.zeros(2), 1.0, _unit([1.0, 1.0]), -0.2, 0.4, nodes=24)]
    est = integrate_scalar(f, lambda c: np.ones(len(c["v"])), DET)
    seg = lambda a: math.asin(a) + a * math.sqrt(1 - a * a)   # int_0^a 2 sqrt(1-s^2) ds
    assert est.value == pytest.approx(seg(0.4) + seg(0.2), rel=1e-6)


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_slab_ball_full_slab_recovers_ball_moments(direction, center):
    c = np.array(center)
    f = [slab_ball_factor("v", 3, c, 0.8, _unit(direction), -10.0, 10.0, nodes=10)]
    vol = integrate_scalar(f, lambda x: np.ones(len(x["v"])), DET).value
    mean = integrate(f, lambda x: x["v"], DET).batch_values[0] / vol
    assert vol == pytest.approx(float(ball_volume(3, 0.8)), rel=1e-12)
    assert np.allclose(mean, c, atol=1e-12)


def test_slab_ball_rejects_high_dimension():
    with pytest.raises(InvalidInputError):
        slab_ball_factor("v", 4, np.zeros(4), 1.0, np.eye(4)[0], 0, 1)


@pytest.mark.parametrize("group", ["SO2", "SO3", "circle_e1"])
def test_haar_is_probability(group):
    f = [haar_factor("k", group)]
    est = integrate_scalar(f, lambda c: np.ones(len(c["k"])), DET)
    assert est.value == pytest.approx(1.0, rel=1e-13)
    mean = integrate(f, lambda c: c["k"].reshape(len(c["k"]), -1), DET).batch_values[0]
    n = 2 if group == "SO2" else 3
    if group != "circle_e1":
        assert np.allclose(mean, 0.0, atol=1e-12)
    else:
        assert mean[0] == pytest.approx(1.0)


def test_so3_second_moment():
    f = [haar_factor("k", "SO3")]
    est = integrate_scalar(f, lambda c: c["k"][:, 0, 2] ** 2, DET)
    assert est.value == pytest.approx(1 / 3, rel=1e-12)


def test_so3_haar_is_left_invariant_on_a_test_polynomial():
    g = euler_zyz(0.3, 1.1, -0.7)
    f = [haar_factor("k", "SO3")]
    p = lambda k: k[:, 0, 0] ** 2 * k[:, 1, 2] + k[:, 2, 2] ** 4
    a = integrate_scalar(f, lambda c: p(c["k"]), DET).value
    b = integrate_scalar(f, lambda c: p(g @ c["k"]), DET).value
    assert a == pytest.approx(b, abs=1e-12)


def test_cyclic_atoms():
    f = [haar_factor("k", "cyclic", m=3)]
    est = integrate_scalar(f, lambda c: c["k"][:, 1, 1], QMC)
    assert est.value == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(cyclic_elements(3)[1], rotation_x(2 * math.pi / 3))


def test_qmc_is_reproducible_and_seed_sensitive():
    f = [box_factor("x", [0.0, 0.0], [1.0, 2.0])]
    body = lambda c: np.exp(c["x"][:, 0] * c["x"][:, 1])
    a = integrate_scalar(f, body, QMC)
    b = integrate_scalar(f, body, QMC)
    c = integrate_scalar(f, body, QMC.derive(1))
    assert a == b
    assert a.value != c.value
    assert a.std_error > 0


def test_mc_error_is_calibrated():
    f = [box_factor("x", [0.0], [1.0])]
    sc = IntegrationScheme(kind="mc", budget=2 ** 14, seed=9)
    zs = []
    for i in range(20):
        e = integrate_scalar(f, lambda c: np.sin(3 * c["x"][:, 0]), sc.derive(i))
        zs.append((e.value - (1 - math.cos(3)) / 3) / e.std_error)
    assert 0.4 < np.std(zs) < 1.8


def test_nan_integrand_is_reported_with_node():
    f = [box_factor("x", [0.0], [1.0])]
    with pytest.raises(PoisonedEstimateError) as err:
        integrate_scalar(f, lambda c: np.where(c["x"][:, 0] > 0.5, np.nan, 1.0), DET)
    assert "x" in err.value.node


def test_atoms_are_summed_exactly_under_qmc():
    f = [Atoms("a", np.array([1.0, 2.0, 3.0]), np.array([0.2, 0.3, 0.5])),
         box_factor("x", [0.0], [1.0])]
    est = integrate_scalar(f, lambda c: c["a"] * c["x"][:, 0], QMC)
    assert abs(est.value - 1.15) <= max(5 * est.std_error, 1e-9)


def test_combine_independent():
    a, b = IntegralEstimate(1.0, 0.3, 10), IntegralEstimate(2.0, 0.4, 10)
    c = combine_independent([a, b], [1.0, -1.0])
    assert c.value == -1.0 and c.std_error == pytest.approx(0.5)
    assert c.to_dict() == {"value": -1.0, "stdError": 0.5, "samples": 20}


def test_product_nodes_weights():
    ctx, w = product_nodes([haar_factor("k", "SO2", nodes=8), box_factor("x", [0.0], [2.0], nodes=5)], DET)
    assert len(w) == 40 and w.sum() == pytest.approx(2.0)
