import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from horbit import lie
from horbit import matrix_core as mc
from horbit.deformation import (CSV_HEADER, ConvergenceRow, DeformationPoint, convergence_table,
                                final_within_errors, h_0, h_t, integrate_on_fiber,
                                iwasawa_chart_limit, limit_constant, measure_t,
                                monotone_within_errors, trace_limit_check)
from horbit.errors import InvalidInputError, UnsupportedError
from horbit.groupint import cartan_integral
from horbit.quadrature import IntegralEstimate, IntegrationScheme, ball_volume, rotation2
from horbit.testfunctions import CompactPolynomial, DeformationFunction, TestFunction

DET = IntegrationScheme(kind="tensor", nodes=32)


def _k(group, c):
    return mc.mat_exp(mc.from_coords(np.asarray(c, float), group.k_basis))


@given(st.lists(st.floats(-1, 1), min_size=5, max_size=5), st.floats(0.05, 2.0))
def test_deformation_point_round_trip(c, t):
    G = lie.load_preset("SL3R")
    p = DeformationPoint(t, _k(G, [0.3, -0.2, 0.5]), np.array(c), G)
    q = DeformationPoint.from_group(p.group_element, t, G)
    assert np.allclose(q.k, p.k, atol=1e-10) and np.allclose(q.X, p.X, atol=1e-9)


def test_deformation_point_rejects_t_zero(sl2):
    with pytest.raises(InvalidInputError):
        DeformationPoint(0.0, np.eye(2), np.zeros(2), sl2).group_element
    with pytest.raises(InvalidInputError):
        DeformationPoint.from_group(np.eye(2), 0.0, sl2)


def test_measure_at_t_zero_is_lebesgue(sl2):
    est = integrate_on_fiber(0.0, sl2, lambda k, X: np.ones(len(X)), np.zeros(2), 0.7,
                             IntegrationScheme(kind="tensor", nodes=8))
    assert est.value == pytest.approx(float(ball_volume(2, 0.7)), rel=1e-12)
    factors, weight = measure_t(0.0, sl2, np.zeros(2), 0.7)
    assert np.all(weight({"X": np.ones((3, 2))}) == 1.0)
    _, weight_t = measure_t(0.5, sl2, np.zeros(2), 0.7)
    X = np.array([[0.3, 0.4]])
    assert weight_t({"X": X})[0] == pytest.approx(sl2.jacobian_J(0.5 * sl2.p_matrix(X[0])))


def test_fiber_integral_rescales_the_group_integral(sl2):
    # X -> tX has Jacobian t^{dim p}, so int_{G_t} f(k e^{tX}) d_t g = t^{-dim p} int_G f dg
    f = TestFunction(CompactPolynomial.from_config([[1.0, []], [0.4, [[0, 0]]]]), [0.2, -0.1], 0.7,
                     "group", sl2)
    t = 0.5
    fib = integrate_on_fiber(t, sl2, lambda k, X: f.chart(k, t * X), f.center / t, f.radius / t, DET)
    whole = cartan_integral(sl2, f, DET)
    assert fib.value == pytest.approx(2 ** sl2.dim_p * whole.value, rel=1e-10)


def test_h_t_tends_to_projection_on_a(sl3):
    rng = np.random.default_rng(0)
    Z = rng.normal(size=5)
    k = _k(sl3, [0.4, 0.1, -0.7])
    errs = []
    for t in (1e-1, 1e-2, 1e-3):
        g = k @ mc.mat_exp(t * sl3.p_matrix(Z))
        errs.append(np.abs(h_t(t, g, sl3) - h_0(Z, sl3)).max())
    assert errs[0] > errs[1] > errs[2]
    # first order in t
    assert errs[1] / errs[2] == pytest.approx(10.0, rel=0.1)
    assert np.allclose(h_0(Z, sl3), Z[:2])
    with pytest.raises(InvalidInputError):
        h_t(0.0, np.eye(3), sl3)


def test_iwasawa_chart_limit(sl3):
    # k e^{tX} e^{tY} -> (k, X + phi(Y)) in the chart of G_t
    k = _k(sl3, [0.2, -0.3, 0.1])
    Xa, Yn = np.array([0.3, -0.4]), np.array([0.5, -0.2, 0.7])
    want = sl3.p_coords(sl3.a_matrix(Xa) + lie.phi_map(sl3.n_matrix(Yn)))
    errs = []
    for t in (1e-2, 1e-3, 1e-4):
        kk, Z = iwasawa_chart_limit(k, Xa, Yn, t, sl3)
        errs.append(max(np.abs(Z - want).max(), np.abs(kk - k).max()))
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-3


def test_trace_limit_converges_at_rate_t_squared(sl2):
    f = DeformationFunction(CompactPolynomial.from_config([[1.0, []], [0.5, [[0, 1]]]]),
                            [0.3, -0.2], 0.9, sl2)
    rows = trace_limit_check(sl2, rotation2(math.pi / 2), f, [0.4, 0.2, 0.1], DET)
    d = np.array([r.abs_diff for r in rows])
    slopes = np.log2(d[:-1] / d[1:])
    assert np.allclose(slopes, 2.0, atol=0.05)
    assert monotone_within_errors(rows)


def test_trace_limit_refuses_sl3(sl3):
    f = DeformationFunction(CompactPolynomial(), np.zeros(5), 0.5, sl3)
    with pytest.raises(UnsupportedError):
        trace_limit_check(sl3, np.eye(3), f, [1.0], DET)


def test_limit_constant(sl2, sl3):
    # p_M is trivial for the split groups, so the constant is 1 / J_phi
    assert limit_constant(sl2, -np.eye(2)) == pytest.approx(math.sqrt(2))
    assert limit_constant(sl3, np.diag([1.0, -1.0, -1.0])) == pytest.approx(2 ** 1.5)


@pytest.mark.parametrize("grid", [[], [1.0, 0.0], [0.5, 1.0], [1.0, 1.0], [1.0, -0.5]])
def test_grid_validation(sl2, grid):
    f = DeformationFunction(CompactPolynomial(), np.zeros(2), 0.5, sl2)
    rhs = IntegralEstimate(0.0, 0.0, 1)
    with pytest.raises(InvalidInputError):
        convergence_table(grid, sl2, -np.eye(2), [f, f], DET, rhs=rhs)


def test_row_helpers():
    e = lambda v, s: IntegralEstimate(v, s, 10)
    rows = [ConvergenceRow(1.0, e(1.0, 0.1), e(0.0, 0.0)), ConvergenceRow(0.5, e(0.5, 0.1), e(0.0, 0.0))]
    assert rows[1].combined_std_error == pytest.approx(0.1)
    assert monotone_within_errors(rows) and not final_within_errors(rows)
    assert len(rows[0].csv_fields()) == len(CSV_HEADER.split(","))
