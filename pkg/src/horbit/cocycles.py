"""Orbital integrals, higher orbital integrals and their cocycle defects.

* :func:`orbital_integral` -- the degree-0 trace ``Lambda_x`` on SL(2,R).
* :func:`tau_ax` -- the higher orbital integral on a motion group.
* :func:`phi_px` -- the higher orbital integral on a reductive preset.
* :func:`hochschild_defect`, :func:`cyclicity_defect` -- the algebraic checks.

Every evaluator returns per-permutation columns so the signed sum and its
terms come from the same batches.
"""

import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import lie
from . import matrix_core as mc
from .errors import InvalidInputError, UnsupportedError
from .motion import MotionPreset, h_components, in_M_K, mk_stabilizer_samples
from .quadrature import (Atoms, IntegralEstimate, IntegrationScheme, ball_factor, slab_ball_factor,
                         box_factor, combine_independent, haar_factor, integrate)
from .testfunctions import TestFunction, convolve

REGULARITY_TOL = 1e-8


# ---------------------------------------------------------------- records

def permutation_sign(p):
    p = list(p)
    sign = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


@dataclass
class CochainEvaluation:
    degree: int
    inputs: Sequence
    result: IntegralEstimate
    permutation_terms: List[Tuple[Tuple[int, ...], int, IntegralEstimate]]

    def to_dict(self):
        d = self.result.to_dict()
        d["perSigmaTerms"] = [
            {"sigma": [i + 1 for i in s], "sign": sg, **e.to_dict()}
            for s, sg, e in self.permutation_terms]
        return d


def _evaluation(degree, fs, batched, perms):
    signs = [permutation_sign(p) for p in perms]
    total = batched.estimate(np.array(signs, dtype=float))
    terms = [(tuple(p), s, batched.column(i)) for i, (p, s) in enumerate(zip(perms, signs))]
    return CochainEvaluation(degree, list(fs), total, terms)


@dataclass(frozen=True)
class DefectEstimate(IntegralEstimate):
    terms: Tuple = field(default=())

    @property
    def scale(self):
        """Largest magnitude among the individual terms of the alternating sum."""
        return max((abs(t.value) for t in self.terms), default=0.0)


# ---------------------------------------------------------------- regular elements

def det_on_subspace(x, basis):
    """det(Ad_x - Id) on the span of ``basis``; the empty determinant is 1."""
    basis = np.asarray(basis, dtype=float)
    if basis.shape[0] == 0:
        return 1.0
    A = mc.adjoint_action(x, basis)
    return float(np.linalg.det(A - np.eye(basis.shape[0])))


@dataclass(frozen=True, eq=False)
class RegularElement:
    x: np.ndarray
    certificate: float
    pm_trivial: bool

    @property
    def regular(self):
        return self.pm_trivial or abs(self.certificate) > REGULARITY_TOL

    @classmethod
    def in_group(cls, group, x):
        """x in M of a reductive preset, certified by |det_{p_M}(Ad_x - Id)|."""
        x = np.asarray(x, dtype=float)
        if not lie.in_M(x, group):
            raise InvalidInputError("x is not in the finite group M of the preset")
        cert = det_on_subspace(x, group.p_M_basis)
        return cls(x, cert, group.p_M_basis.shape[0] == 0)

    @classmethod
    def in_motion(cls, preset, x):
        x = np.asarray(x, dtype=float)
        if not in_M_K(preset, x):
            raise InvalidInputError("x is not in the stabilizer M_K")
        if preset.group is not None:
            cert = det_on_subspace(x, preset.group.p_M_basis)
            return cls(x, cert, preset.group.p_M_basis.shape[0] == 0)
        return cls(x, 1.0, True)

    @classmethod
    def elliptic(cls, group, x):
        """A regular element of K for the equal-rank preset SL2R."""
        x = np.asarray(x, dtype=float)
        if group.name != "SL2R":
            raise UnsupportedError("elliptic orbital integrals are implemented for SL2R only")
        if np.abs(x.T @ x - np.eye(2)).max() > 1e-10 or np.linalg.det(x) < 0:
            raise InvalidInputError("x is not a rotation")
        cert = det_on_subspace(x, group.p_basis)
        return cls(x, cert, False)


def _as_x(x):
    return x.x if isinstance(x, RegularElement) else np.asarray(x, dtype=float)


# ---------------------------------------------------------------- motion groups

def tau_ax(preset: MotionPreset, x, fs, scheme: IntegrationScheme, nodes=None):
    """Higher orbital integral tau_{A,x}(f_0, ..., f_n) on a motion group.

    The integration variables are ``h`` in M_K/Z(x), ``u`` in K, ``w`` in
    A-perp and ``(k_j, v_j)`` for j = 1..n.  The ``w`` range is the slice of
    the support ball of ``f_0`` pulled back through the vector argument,
    computed per node from the earlier variables.  ``nodes`` optionally maps
    factor names ('u', 'k1', 'v1', ..., 'w') to node counts.
    """
    xm = _as_x(x)
    if not in_M_K(preset, xm):
        raise InvalidInputError("x is not in the stabilizer M_K")
    n = preset.n
    if len(fs) != n + 1:
        raise InvalidInputError(f"tau_ax on dim A = {n} needs {n + 1} functions, got {len(fs)}")
    nodes = dict(nodes or {})
    c0, R0 = fs[0].support_ball()
    Aperp = preset.Aperp
    factors = [mk_stabilizer_samples(preset, xm, name="h"), preset.haar("u", nodes.get("u"))]
    for j in range(1, n + 1):
        cj, rj = fs[j].support_ball()
        factors.append(preset.haar(f"k{j}", nodes.get(f"k{j}")))
        if n == 1 and preset.dim_V <= 3:
            # the support of f_0 restricts v_1 to the slab |alpha + beta . v_1| <= R0
            factors.append(slab_ball_factor("v1", preset.dim_V, cj, rj,
                                            lambda c: _slab(c)[1],
                                            lambda c: -R0 - _slab(c)[0],
                                            lambda c: R0 - _slab(c)[0], nodes.get("v1")))
        else:
            factors.append(ball_factor(f"v{j}", preset.dim_V, cj, rj, nodes.get(f"v{j}")))

    def _slab(ctx):
        """p_A = alpha + beta . v_1 for n = 1, with beta a unit vector."""
        ku = ctx["k1"] @ ctx["u"]
        alpha = preset.act_inv(ku, c0) @ preset.A[0]
        beta = np.einsum("...ji,...j->...i", preset.action(ctx["k1"]),
                         preset.act(ku, preset.A[0]))
        return alpha, beta

    def chain(ctx):
        """Cumulative products k_1...k_j and the w-slice data."""
        ks = [ctx[f"k{j}"] for j in range(1, n + 1)]
        left = [ks[0]]
        for j in range(1, n):
            left.append(left[-1] @ ks[j])
        ku = left[-1] @ ctx["u"]
        shift = sum(preset.act(left[j - 1], ctx[f"v{j}"]) for j in range(1, n + 1))
        return ks, left, ku, shift

    def w_slice(ctx):
        _, _, ku, shift = chain(ctx)
        p = preset.act_inv(ku, c0 + shift)
        pa = p @ preset.A.T
        rad2 = R0 ** 2 - np.einsum("...i,...i->...", pa, pa)
        return p @ Aperp.T, np.sqrt(np.clip(rad2, 0.0, None))

    dim_w = Aperp.shape[0]
    if dim_w > 0:
        factors.append(ball_factor("w", dim_w, lambda c: w_slice(c)[0],
                                   lambda c: w_slice(c)[1], nodes.get("w")))
    perms = list(permutations(range(n)))

    def body(ctx):
        ks, left, ku, shift = chain(ctx)
        u, h = ctx["u"], ctx["h"]
        N = len(u)
        w_full = ctx["w"] @ Aperp if dim_w > 0 else np.zeros((N, preset.dim_V))
        conj = u @ h @ xm @ np.swapaxes(h, -1, -2) @ np.swapaxes(u, -1, -2)
        k0 = conj @ np.swapaxes(left[-1], -1, -2)
        v0 = preset.act(ku, w_full) - shift
        val = fs[0].motion_value(k0, v0, ctx)
        for j in range(1, n + 1):
            val = val * fs[j].motion_value(ks[j - 1], ctx[f"v{j}"], ctx)
        # H arguments u^{-1} (k_{j+1}...k_n)^{-1} v_j
        Hs = []
        for j in range(1, n + 1):
            right = u
            for l in range(n, j, -1):
                right = ks[l - 1] @ right
            Hs.append(h_components(preset, preset.act_inv(right, ctx[f"v{j}"])))
        cols = []
        for p in perms:
            prod = val.copy()
            for j in range(n):
                prod = prod * Hs[j][:, p[j]]
            cols.append(prod)
        return np.stack(cols, axis=-1)

    batched = integrate(factors, body, scheme)
    return _evaluation(n, fs, batched, perms)


# ---------------------------------------------------------------- reductive groups

def _compact_name(group):
    return "SO2" if group.n == 2 else "SO3"


def n_box_bound(group, s):
    """Bounds on the exp-coordinates of N for ``n`` with singular values in [e^-s, e^s]."""
    if group.n == 2:
        return np.array([2.0 * math.sinh(s)])
    B = math.sinh(2.0 * s)
    # basis order E12, E13, E23; log(I + N) = N - N^2/2 shifts only the (1,3) entry
    return np.array([B, B + 0.5 * B * B, B])


def _f_value_on_group(f, g, t, ctx):
    if t == 1.0 and f.domain == "group":
        return f.group_value(g, ctx)
    return f.fiber_value(g, t, ctx)


def _support_for_chart(f, group):
    if isinstance(f, TestFunction):
        return f.support_ball()
    return np.zeros(group.dim_p), math.sqrt(group.n) * f.op_radius()


def higher_orbital_t(group, x, fs, scheme, t=1.0, nodes=None, margin=1.1):
    """Phi_{P_t,x,t}(f_0, ..., f_n) with n = dim a, finite-sum over M/Z_M(x).

    ``g_j = k_j exp(t X_j)`` carries the weight ``J(t X_j)``; the N-integral
    uses ``n = exp(t Y)`` with Lebesgue ``dY`` on a support-derived box.  At
    ``t = 1`` this is Phi_{P,x} on G itself.
    """
    if t == 0:
        raise InvalidInputError("t = 0 is the motion-group side; use tau_ax")
    xm = _as_x(x)
    if not lie.in_M(xm, group):
        raise InvalidInputError("x is not in the finite group M of the preset")
    n = group.dim_a
    if len(fs) != n + 1:
        raise InvalidInputError(f"Phi on dim a = {n} needs {n + 1} functions, got {len(fs)}")
    nodes = dict(nodes or {})
    reps = lie.quotient_representatives(group.M, xm)
    s = abs(t) * sum(f.op_radius() for f in fs)
    ybound = margin * n_box_bound(group, s) / abs(t)
    factors = [Atoms("h", reps, np.full(len(reps), 1.0 / len(reps))),
               haar_factor("k", _compact_name(group), nodes=nodes.get("k")),
               box_factor("Y", -ybound, ybound, nodes.get("Y"))]
    for j in range(1, n + 1):
        cj, rj = _support_for_chart(fs[j], group)
        factors.append(haar_factor(f"k{j}", _compact_name(group), nodes=nodes.get(f"k{j}")))
        factors.append(ball_factor(f"X{j}", group.dim_p, cj, rj, nodes.get(f"X{j}")))
    perms = list(permutations(range(n)))

    def body(ctx):
        k, h = ctx["k"], ctx["h"]
        nY = mc.mat_exp(t * group.n_matrix(ctx["Y"]))
        val = None
        gs, ginvs = [], []
        for j in range(1, n + 1):
            Xm = group.p_matrix(ctx[f"X{j}"])
            e = mc.mat_exp(t * Xm)
            g = ctx[f"k{j}"] @ e
            gs.append(g)
            ginvs.append(mc.mat_exp(-t * Xm) @ np.swapaxes(ctx[f"k{j}"], -1, -2))
            fj = fs[j]
            if isinstance(fj, TestFunction):
                vj = fj.chart(ctx[f"k{j}"], ctx[f"X{j}"])
            else:
                vj = _f_value_on_group(fj, g, t, ctx)
            vj = vj * group.jacobian_J(t * Xm)
            val = vj if val is None else val * vj
        g0 = k @ h @ xm @ np.swapaxes(h, -1, -2) @ nY @ np.swapaxes(k, -1, -2)
        for gi in reversed(ginvs):
            g0 = g0 @ gi
        live = val != 0.0
        f0 = np.zeros(len(k))
        if np.any(live):
            f0[live] = _f_value_on_group(fs[0], g0[live], t, ctx)
        val = val * f0
        Hs = []
        acc = k
        for j in range(n, 0, -1):
            acc = gs[j - 1] @ acc
            Hs.append(lie.iwasawa_H(acc, group) / t)
        Hs = Hs[::-1]
        cols = []
        for p in perms:
            prod = val.copy()
            for j in range(n):
                prod = prod * Hs[j][:, p[j]]
            cols.append(prod)
        return np.stack(cols, axis=-1)

    batched = integrate(factors, body, scheme)
    return _evaluation(n, fs, batched, perms)


def phi_px(group, x, fs, scheme, nodes=None):
    """Phi_{P,x}(f_0, ..., f_n) on the reductive preset (the t = 1 fiber)."""
    return higher_orbital_t(group, x, fs, scheme, 1.0, nodes)


def elliptic_x_radius(theta0, R):
    """Largest ||X||_op with e^X x e^-X in the op-ball of radius R, x = rotation(theta0)."""
    s2 = math.sin(theta0) ** 2
    if s2 < 1e-24:
        raise InvalidInputError("rotation angle is not regular")
    arg = (math.cosh(2.0 * R) - math.cos(theta0) ** 2) / s2
    return 0.25 * math.acosh(max(arg, 1.0))


def conjugation_orbit_t(group, x, f, scheme, t=1.0, nodes=None, margin=1.1):
    """int_K int_p f_t(k e^{tX} x e^{-tX} k^{-1}) J(tX) dk dX for x elliptic in SL2R."""
    reg = x if isinstance(x, RegularElement) else RegularElement.elliptic(group, x)
    if not reg.regular:
        raise InvalidInputError("x is not regular")
    xm = reg.x
    theta0 = math.atan2(xm[1, 0], xm[0, 0])
    lam = elliptic_x_radius(theta0, abs(t) * f.op_radius()) / abs(t)
    rad = margin * math.sqrt(2.0) * lam
    nodes = dict(nodes or {})
    factors = [haar_factor("k", "SO2", nodes=nodes.get("k")),
               ball_factor("X", group.dim_p, np.zeros(group.dim_p), rad, nodes.get("X"))]

    def body(ctx):
        k = ctx["k"]
        Xm = group.p_matrix(ctx["X"])
        g = k @ mc.mat_exp(t * Xm) @ xm @ mc.mat_exp(-t * Xm) @ np.swapaxes(k, -1, -2)
        return _f_value_on_group(f, g, t, ctx) * group.jacobian_J(t * Xm)

    return integrate(factors, body, scheme).estimate()


def orbital_integral(group, x, f, scheme, nodes=None):
    """Lambda_x(f) = int_{G/Z_G(x)} f(g x g^-1) d[g] for x regular elliptic in SL2R."""
    if f.domain != "group":
        raise InvalidInputError("orbital_integral needs a reductive-group function")
    return conjugation_orbit_t(group, x, f, scheme, 1.0, nodes)


# ---------------------------------------------------------------- cochains and defects

class Cochain:
    """A multilinear functional with its own notion of convolution."""
    degree = 0

    def __call__(self, fs, scheme):
        raise NotImplementedError

    def convolve(self, f, g):
        raise NotImplementedError


class TauCochain(Cochain):
    def __init__(self, preset, x, conv_scheme, nodes=None):
        self.preset, self.x, self.conv_scheme, self.nodes = preset, _as_x(x), conv_scheme, nodes
        self.degree = preset.n

    def __call__(self, fs, scheme):
        return tau_ax(self.preset, self.x, fs, scheme, self.nodes).result

    def convolve(self, f, g):
        return convolve(f, g, self.conv_scheme, self.preset)


class PhiCochain(Cochain):
    def __init__(self, group, x, conv_scheme, nodes=None):
        self.group, self.x, self.conv_scheme, self.nodes = group, _as_x(x), conv_scheme, nodes
        self.degree = group.dim_a

    def __call__(self, fs, scheme):
        return phi_px(self.group, self.x, fs, scheme, self.nodes).result

    def convolve(self, f, g):
        return convolve(f, g, self.conv_scheme, self.group)


class OrbitalCochain(Cochain):
    degree = 0

    def __init__(self, group, x, conv_scheme, nodes=None):
        self.group, self.x, self.conv_scheme, self.nodes = group, x, conv_scheme, nodes

    def __call__(self, fs, scheme):
        return orbital_integral(self.group, self.x, fs[0], scheme, self.nodes)

    def convolve(self, f, g):
        return convolve(f, g, self.conv_scheme, self.group)


def _defect(cochain, arg_lists, coeffs, scheme):
    terms = [cochain(args, scheme.derive(i)) for i, args in enumerate(arg_lists)]
    tot = combine_independent(terms, coeffs)
    return DefectEstimate(tot.value, tot.std_error, tot.samples, tuple(terms))


def hochschild_defect(cochain, fs, scheme):
    """b Phi(f_0, ..., f_{n+1}) for a degree-n cochain; errors add in quadrature."""
    n = cochain.degree
    if len(fs) != n + 2:
        raise InvalidInputError(f"b of a degree-{n} cochain needs {n + 2} functions")
    fs = list(fs)
    arg_lists, coeffs = [], []
    for i in range(n + 1):
        merged = fs[:i] + [cochain.convolve(fs[i], fs[i + 1])] + fs[i + 2:]
        arg_lists.append(merged)
        coeffs.append((-1.0) ** i)
    arg_lists.append([cochain.convolve(fs[n + 1], fs[0])] + fs[1:n + 1])
    coeffs.append((-1.0) ** (n + 1))
    return _defect(cochain, arg_lists, coeffs, scheme)


def cyclicity_defect(cochain, fs, scheme):
    """Phi(f_n, f_0, ..., f_{n-1}) - (-1)^n Phi(f_0, ..., f_n)."""
    n = cochain.degree
    if len(fs) != n + 1:
        raise InvalidInputError(f"a degree-{n} cochain takes {n + 1} functions")
    fs = list(fs)
    rotated = [fs[n]] + fs[:n]
    return _defect(cochain, [rotated, fs], [1.0, -((-1.0) ** n)], scheme)
