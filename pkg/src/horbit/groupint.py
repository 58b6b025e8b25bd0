"""Haar integrals on the reductive presets in three coordinate systems.

All three use the normalisation ``dg = J(X) dk dX`` of the Cartan chart with
``dk`` the probability Haar measure; the Iwasawa and KAK versions carry the
constants of :func:`lie.iwasawa_measure_constant` and
:func:`lie.kak_measure_constant`.  Integration ranges are derived from the
chart support ball ``B(c, r)`` of the integrand: every ``g`` in the support
has ``|log singular values|_2 <= |c| + r``.
"""

import math

import numpy as np

from . import lie
from . import matrix_core as mc
from .errors import InvalidInputError
from .quadrature import ball_factor, box_factor, box_factor_dim, haar_factor, integrate


def _compact(group):
    return "SO2" if group.n == 2 else "SO3"


def _group_fn(f):
    if getattr(f, "domain", "group") != "group":
        raise InvalidInputError("group integrals need a function on the reductive group")
    return f


def _support_radius(f):
    c, r = f.support_ball()
    return float(np.linalg.norm(c)) + r


def cartan_integral(group, f, scheme, nodes=None):
    """int_G f dg in the chart ``g = k exp(X)`` with ``dg = J(X) dk dX``."""
    f = _group_fn(f)
    nodes = dict(nodes or {})
    c, r = f.support_ball()
    factors = [haar_factor("k", _compact(group), nodes=nodes.get("k")),
               ball_factor("X", group.dim_p, c, r, nodes.get("X"))]

    def body(ctx):
        Xm = group.p_matrix(ctx["X"])
        g = ctx["k"] @ mc.mat_exp(Xm)
        return f.group_value(g, ctx) * group.jacobian_J(Xm)

    return integrate(factors, body, scheme).estimate()


def _unipotent(group, nvals):
    """Upper unitriangular matrix with strictly upper entries ``nvals`` (basis order)."""
    return np.eye(group.n) + group.n_matrix(nvals)


def iwasawa_integral(group, f, scheme, nodes=None):
    """int_G f dg with ``g = k exp(H) n`` and ``dg = c e^{2 rho(H)} dk dH dn``.

    ``n = I + N`` is integrated in its matrix entries, which has unit
    Jacobian against the exponential coordinates of N.  The entry box is
    conditional on ``a``: column j of ``a n`` has norm at most ``e^R``.
    """
    f = _group_fn(f)
    nodes = dict(nodes or {})
    R = _support_radius(f)
    hb = math.sqrt(group.n) * R
    pairs = [(i, j) for i in range(group.n) for j in range(i + 1, group.n)]
    eR2 = math.exp(2.0 * R)

    def diag_a(ctx):
        return np.exp(np.einsum("...k,kii->...i", ctx["H"], group.a_basis))

    def bound(ctx):
        a = diag_a(ctx)
        cols = [np.sqrt(np.clip(eR2 - a[:, j] ** 2, 0.0, None)) / a[:, i] for i, j in pairs]
        return np.stack(cols, -1)

    factors = [haar_factor("k", _compact(group), nodes=nodes.get("k")),
               box_factor("H", np.full(group.dim_a, -hb), np.full(group.dim_a, hb), nodes.get("H")),
               box_factor_dim("N", group.dim_n, lambda c: -bound(c), bound, nodes.get("N"))]
    const = lie.iwasawa_measure_constant(group)

    def body(ctx):
        a = diag_a(ctx)
        g = ctx["k"] @ (a[:, :, None] * _unipotent(group, ctx["N"]))
        return const * lie.rho_weight(ctx["H"], group) * f.group_value(g, ctx)

    return integrate(factors, body, scheme).estimate()


def kak_integral(group, f, scheme, nodes=None):
    """int_G f dg with ``g = k1 exp(H) k2``, H in the positive chamber, sinh-product density."""
    f = _group_fn(f)
    nodes = dict(nodes or {})
    R = _support_radius(f)
    factors = [haar_factor("k1", _compact(group), nodes=nodes.get("k1")),
               box_factor("H", np.full(group.dim_a, -R), np.full(group.dim_a, R), nodes.get("H")),
               haar_factor("k2", _compact(group), nodes=nodes.get("k2"))]
    const = lie.kak_measure_constant(group)

    def body(ctx):
        H = ctx["H"]
        chamber = np.all(lie.root_values(H, group) > 0.0, axis=-1)
        g = ctx["k1"] @ mc.mat_exp(group.a_matrix(H)) @ ctx["k2"]
        dens = np.where(chamber, lie.restricted_root_product(H, group), 0.0)
        return const * dens * f.group_value(g, ctx)

    return integrate(factors, body, scheme).estimate()


INTEGRATORS = {"cartan": cartan_integral, "iwasawa": iwasawa_integral, "kak": kak_integral}
