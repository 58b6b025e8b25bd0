import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special

from horbit import matrix_core as mc
from horbit.cocycles import (OrbitalCochain, RegularElement, TauCochain, cyclicity_defect,
                             hochschild_defect, orbital_integral, permutation_sign, tau_ax)
from horbit.errors import InvalidInputError, UnsupportedError
from horbit.motion import finite_cyclic, se3
from horbit.quadrature import IntegrationScheme, cyclic_elements, rotation2
from horbit.testfunctions import CompactPolynomial, Function, TestFunction

DET = IntegrationScheme(kind="tensor", nodes=8)
FC_NODES = {"v1": (16, 24, 4), "w": (16, 4)}


def _fc_pair():
    f0 = TestFunction(CompactPolynomial.from_config([[1.0, []], [0.5, [[1, 1]]], [0.3, [[2, 1]]]]),
                      [0.3, 0.2, -0.1], 1.0)
    f1 = TestFunction(CompactPolynomial.from_config([[1.0, []], [-0.4, [[1, 2]]]]),
                      [-0.2, -0.1, 0.3], 0.9)
    return f0, f1


def _plane_integral(delta, r):
    """int over a plane at distance delta from the centre of a 3-D bump of radius r.

    With m = r^2 - delta^2 the integral is pi m E_2(r^2 / m).
    """
    m = r * r - delta * delta
    return math.pi * m * special.expn(2, r * r / m) if m > 0 else 0.0


def _finite_cyclic_oracle(x, fa, fb):
    """tau_{A,x}(fa, fb) on FiniteCyclic(3) reduced to one dimension.

    K acts by rotations about e_1 = A, so the ``a = <v, e_1>`` coordinate
    decouples: the K sum gives a constant and both bumps integrate over
    planes orthogonal to e_1 in closed form.
    """
    ks = cyclic_elements(3)
    ck = np.mean([fa.compact(x @ k.T) * fb.compact(k) for k in ks])
    ca, cb = fa.center[0], fb.center[0]
    lo, hi = max(-ca - fa.radius, cb - fb.radius), min(-ca + fa.radius, cb + fb.radius)
    val = integrate.quad(lambda a: a * _plane_integral(-a - ca, fa.radius)
                         * _plane_integral(a - cb, fb.radius),
                         lo, hi, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
    return ck * val


def test_permutation_sign_examples():
    assert permutation_sign((0, 1, 2)) == 1
    assert permutation_sign((1, 0, 2)) == -1
    assert permutation_sign((1, 2, 0)) == 1


@given(st.permutations(range(5)), st.permutations(range(5)))
def test_permutation_sign_is_a_homomorphism(p, q):
    pq = [p[q[i]] for i in range(5)]
    assert permutation_sign(pq) == permutation_sign(p) * permutation_sign(q)


def test_regular_element_certificates(sl2, sl3):
    r = RegularElement.in_group(sl2, -np.eye(2))
    assert r.pm_trivial and r.regular
    assert RegularElement.in_group(sl3, np.diag([-1.0, -1.0, 1.0])).regular
    with pytest.raises(InvalidInputError):
        RegularElement.in_group(sl2, rotation2(0.3))
    # Ad of rotation(theta) rotates p by 2 theta, so det(Ad_x - I) = 2 - 2 cos(2 theta)
    e = RegularElement.elliptic(sl2, rotation2(math.pi / 2))
    assert e.certificate == pytest.approx(4.0)
    assert not RegularElement.elliptic(sl2, np.eye(2)).regular
    with pytest.raises(UnsupportedError):
        RegularElement.elliptic(sl3, np.eye(3))


def test_tau_finite_cyclic_matches_semi_analytic_oracle():
    P = finite_cyclic(3)
    x = cyclic_elements(3)[1]
    f0, f1 = _fc_pair()
    want = _finite_cyclic_oracle(x, f0, f1)
    ev = tau_ax(P, x, [f0, f1], DET, FC_NODES)
    assert ev.result.value == pytest.approx(want, rel=1e-5)
    assert ev.result.std_error == 0.0
    assert len(ev.permutation_terms) == 1 and ev.permutation_terms[0][1] == 1


def test_tau_finite_cyclic_is_cyclic():
    P = finite_cyclic(3)
    f0, f1 = _fc_pair()
    d = cyclicity_defect(TauCochain(P, cyclic_elements(3)[1], DET, FC_NODES), [f0, f1], DET)
    assert abs(d.value) <= 1e-5 * d.scale


def test_tau_se3_is_cyclic_within_errors():
    P = se3()
    x = mc.mat_exp(np.array([[0, 0, 0], [0, 0, -1.2], [0, 1.2, 0.0]]))
    f0 = TestFunction(CompactPolynomial.from_config([[1.0, []], [0.9, [[2, 1]]], [-0.9, [[1, 2]]]]),
                      [0.6, 0.2, 0.4], 1.0)
    trace = CompactPolynomial.from_config([[1.0, [[0, 0]]], [1.0, [[1, 1]]], [1.0, [[2, 2]]]])
    f1 = TestFunction(trace, [-0.5, 0.3, 0.6], 0.9)
    sc = IntegrationScheme(kind="qmc", budget=2 ** 16, seed=4)
    d = cyclicity_defect(TauCochain(P, x, DET), [f0, f1], sc)
    assert d.std_error > 0
    assert abs(d.value) <= 4 * d.std_error


def test_tau_input_validation():
    P = finite_cyclic(3)
    f0, f1 = _fc_pair()
    with pytest.raises(InvalidInputError):
        tau_ax(P, cyclic_elements(3)[1], [f0], DET)
    with pytest.raises(InvalidInputError):
        # a quarter turn about e_1 fixes A but is not in the cyclic group
        tau_ax(P, np.eye(3)[[0, 2, 1]] * np.array([1.0, 1.0, -1.0]), [f0, f1], DET)
    with pytest.raises(InvalidInputError):
        cyclicity_defect(TauCochain(P, cyclic_elements(3)[1], DET), [f0], DET)
    with pytest.raises(InvalidInputError):
        hochschild_defect(TauCochain(P, cyclic_elements(3)[1], DET), [f0, f1], DET)


class _Conjugated(Function):
    """g -> f(y^-1 g y)."""
    domain = "group"

    def __init__(self, f, y):
        self.f, self.y, self.yinv = f, y, np.linalg.inv(y)

    def group_value(self, g, ctx=None):
        return self.f.group_value(self.yinv @ g @ self.y, ctx)

    def op_radius(self):
        return self.f.op_radius() + 2.0 * math.log(np.linalg.svd(self.y, compute_uv=False).max())

    def support_ball(self):
        raise NotImplementedError


def test_orbital_integral_is_conjugation_invariant(sl2):
    x = rotation2(1.0)
    f = TestFunction(CompactPolynomial.from_config([[1.0, []], [0.5, [[0, 1]]]]), [0.3, -0.2], 0.6,
                     "group", sl2)
    y = mc.mat_exp(sl2.p_matrix([0.2, 0.1])) @ rotation2(0.4)
    sc = IntegrationScheme(kind="tensor", nodes=96)
    a = orbital_integral(sl2, x, f, sc)
    b = orbital_integral(sl2, x, _Conjugated(f, y), sc)
    assert a.value > 0
    assert b.value == pytest.approx(a.value, rel=1e-6)


def test_orbital_integral_needs_group_function(sl2):
    f = TestFunction(CompactPolynomial(), [0.0, 0.0], 0.5)
    with pytest.raises(InvalidInputError):
        orbital_integral(sl2, rotation2(1.0), f, DET)
