import math

import numpy as np
import pytest
from scipy.integrate import quad

from horbit.errors import InvalidInputError
from horbit.groupint import INTEGRATORS, cartan_integral
from horbit.quadrature import IntegrationScheme
from horbit.testfunctions import CompactPolynomial, TestFunction, bump_profile

DET = IntegrationScheme(kind="tensor", nodes=24)
QMC = IntegrationScheme(kind="qmc", budget=2 ** 16, seed=3)


def _radial_oracle(r):
    """int_p J(X) b(|X|^2/r^2) dX on sl(2): the eigenvalue gap of X is sqrt2 |X|."""
    def integrand(s):
        u = math.sqrt(2.0) * s
        return 2 * math.pi * s * (math.sinh(u) / u if u else 1.0) * float(bump_profile(s * s / r ** 2))
    return quad(integrand, 0.0, r, epsabs=1e-15, epsrel=1e-13)[0]


def test_cartan_integral_matches_radial_oracle(sl2):
    f = TestFunction(CompactPolynomial(), [0.0, 0.0], 0.8, "group", sl2)
    fine = IntegrationScheme(kind="tensor", nodes=48)
    assert cartan_integral(sl2, f, fine).value == pytest.approx(_radial_oracle(0.8), rel=1e-10)


@pytest.mark.parametrize("method", ["iwasawa", "kak"])
def test_other_coordinates_match_radial_oracle(sl2, method):
    f = TestFunction(CompactPolynomial(), [0.0, 0.0], 0.8, "group", sl2)
    est = INTEGRATORS[method](sl2, f, QMC)
    assert abs(est.value - _radial_oracle(0.8)) <= 4 * est.std_error


def test_three_coordinate_systems_agree_on_sl3(sl3):
    f = TestFunction(CompactPolynomial.from_config([[1.0, []], [0.5, [[0, 1]]]]),
                     [0.2, -0.1, 0.1, 0.0, 0.15], 0.5, "group", sl3)
    sc = IntegrationScheme(kind="qmc", budget=2 ** 15, seed=11)
    ests = {m: INTEGRATORS[m](sl3, f, sc) for m in INTEGRATORS}
    names = sorted(ests)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            ea, eb = ests[a], ests[b]
            assert abs(ea.value - eb.value) <= 4 * math.hypot(ea.std_error, eb.std_error), (a, b)


def test_group_integral_rejects_motion_functions(sl2):
    f = TestFunction(CompactPolynomial(), [0.0, 0.0], 0.8)
    with pytest.raises(InvalidInputError):
        cartan_integral(sl2, f, DET)
