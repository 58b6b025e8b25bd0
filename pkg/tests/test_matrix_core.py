import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from horbit import matrix_core as mc
from horbit.errors import InvalidInputError
from horbit.lie import load_preset

from _helpers import j_oracle

finite = st.floats(-2.0, 2.0, allow_nan=False)


def mats(n):
    return arrays(np.float64, (n, n), elements=finite)


def test_inner_is_trace_form():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    Y = np.array([[0.5, -1.0], [2.0, 0.0]])
    assert mc.inner(X, Y) == pytest.approx(np.trace(X.T @ Y))


@given(mats(3))
def test_coords_round_trip_on_sl3(A):
    G = load_preset("SL3R")
    basis = np.concatenate([G.k_basis, G.p_basis])
    X = A - np.trace(A) / 3 * np.eye(3)
    assert np.allclose(mc.from_coords(mc.coords(X, basis), basis), X, atol=1e-12)


@given(mats(3))
def test_mat_exp_symmetric_matches_eigen_oracle(A):
    X = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(X)
    assert np.allclose(mc.mat_exp(X), (V * np.exp(w)) @ V.T, rtol=1e-12, atol=1e-12)


def test_mat_exp_rotation_generator():
    th = 0.83
    X = np.array([[0.0, -th], [th, 0.0]])
    want = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    assert np.allclose(mc.mat_exp(X), want, atol=1e-15)


def test_mat_exp_batched_equals_loop():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(7, 3, 3)) * np.array([0.01, 0.1, 1, 3, 5, 8, 0.5])[:, None, None]
    batched = mc.mat_exp(X)
    for i in range(7):
        assert np.allclose(batched[i], mc.mat_exp(X[i]), rtol=1e-13)


def test_mat_exp_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        mc.mat_exp(np.array([[np.nan, 0.0], [0.0, 1.0]]))


@given(mats(3), mats(3), mats(3))
def test_bracket_jacobi_identity(X, Y, Z):
    b = mc.bracket
    total = b(X, b(Y, Z)) + b(Y, b(Z, X)) + b(Z, b(X, Y))
    assert np.abs(total).max() <= 1e-10


def test_ad_operator_on_k_is_antisymmetric():
    G = load_preset("SL3R")
    X = mc.from_coords(np.array([0.3, -0.7, 1.1]), G.k_basis)
    ad = mc.ad_operator(X, G.k_basis)
    assert np.allclose(ad, -ad.T, atol=1e-14)


@given(arrays(np.float64, (5,), elements=st.floats(-1.5, 1.5)))
def test_jacobian_J_matches_eigenvalue_product(c):
    G = load_preset("SL3R")
    X = G.p_matrix(c)
    assert mc.analytic_jacobian_J(X, G.p_basis) == pytest.approx(j_oracle(X), rel=1e-11)


def test_jacobian_J_sl2_closed_form():
    G = load_preset("SL2R")
    X = G.p_matrix([0.4, -0.3])
    r = np.sqrt(2.0) * np.linalg.norm([0.4, -0.3])
    assert G.jacobian_J(X) == pytest.approx(np.sinh(r) / r, rel=1e-13)


def test_jacobian_J_rejects_non_symmetric():
    G = load_preset("SL2R")
    with pytest.raises(InvalidInputError):
        mc.analytic_jacobian_J(np.array([[0.0, 1.0], [0.0, 0.0]]), G.p_basis)


def test_adjoint_action_of_rotation_is_orthogonal_on_p():
    G = load_preset("SL3R")
    k = mc.mat_exp(mc.from_coords(np.array([0.2, 0.9, -0.4]), G.k_basis))
    A = mc.adjoint_action(k, G.p_basis)
    assert np.allclose(A @ A.T, np.eye(5), atol=1e-13)
