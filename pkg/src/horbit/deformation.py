"""The deformation family G_t and the t -> 0 comparison harnesses.

For t != 0 the fiber G_t is G with the chart ``(k, X) -> k exp(tX)`` and the
measure ``d_t g = J(tX) dk dX``; at t = 0 it is the Cartan motion group with
``dk dX``.  Deformation functions are t-independent in this chart.
"""

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from . import lie
from . import matrix_core as mc
from .cocycles import (RegularElement, conjugation_orbit_t, higher_orbital_t,
                       tau_ax)
from .errors import InvalidInputError, UnsupportedError
from .motion import cartan_motion
from .quadrature import (IntegralEstimate, ball_factor, haar_factor, integrate)


@dataclass(frozen=True, eq=False)
class DeformationPoint:
    t: float
    k: np.ndarray
    X: np.ndarray          # p coordinates
    group: lie.GroupPreset

    @property
    def group_element(self):
        if self.t == 0:
            raise InvalidInputError("the t = 0 fiber is the motion group; no matrix element")
        return self.k @ mc.mat_exp(self.t * self.group.p_matrix(self.X))

    @classmethod
    def from_group(cls, g, t, group):
        """Chart coordinates of ``g`` in the fiber G_t, t != 0."""
        if t == 0:
            raise InvalidInputError("from_group needs t != 0")
        k, X = lie.cartan_decompose(g)
        return cls(t, k, group.p_coords(X) / t, group)


def _compact(group):
    return "SO2" if group.n == 2 else "SO3"


def measure_t(t, group, center, radius, nodes=None):
    """Factors and weight of ``d_t g`` on a chart ball ``B(center, radius)`` in p.

    Returns ``(factors, weight)`` where ``weight(ctx)`` is ``J(tX)``, or 1 on
    the motion-group fiber t = 0.
    """
    factors = [haar_factor("k", _compact(group), nodes=nodes),
               ball_factor("X", group.dim_p, center, radius, nodes)]

    def weight(ctx):
        if t == 0:
            return np.ones(len(ctx["X"]))
        return group.jacobian_J(t * group.p_matrix(ctx["X"]))

    return factors, weight


def integrate_on_fiber(t, group, value, center, radius, scheme, nodes=None):
    """int_{G_t} value(k, X) d_t g over chart coordinates in the ball."""
    factors, weight = measure_t(t, group, center, radius, nodes)
    return integrate(factors, lambda c: value(c["k"], c["X"]) * weight(c), scheme).estimate()


def h_t(t, g, group):
    """a-coordinates of H_t(g) = H(g)/t in the orthonormal basis of a."""
    if t == 0:
        raise InvalidInputError("H_t is defined for t != 0")
    return lie.iwasawa_H(g, group) / t


def h_0(Z, group):
    """H_{j,0}(Z) = <Z, H_j> for Z given by p coordinates."""
    return group.a_coords(group.p_matrix(Z))


def iwasawa_chart_limit(k, X_a, Y_n, t, group):
    """Chart image of ``k exp(tX) exp(tY)`` in G_t: returns (k', p coordinates / t)."""
    g = k @ mc.mat_exp(t * group.a_matrix(X_a)) @ mc.mat_exp(t * group.n_matrix(Y_n))
    kk, Z = lie.cartan_decompose(g)
    return kk, group.p_coords(Z) / t


def phi_px_t(t, group, x, fs, scheme, nodes=None):
    """Phi_{P_t,x,t}(f_{0,t}, ..., f_{n,t}) for deformation functions."""
    reg = x if isinstance(x, RegularElement) else RegularElement.in_group(group, x)
    if not reg.regular:
        raise InvalidInputError("x is not regular: det_{p_M}(Ad_x - Id) below tolerance")
    return higher_orbital_t(group, reg.x, fs, scheme, t, nodes)


def limit_constant(group, x):
    """det_{p_M}(Ad_x - Id)^{-1} J_phi^{-1}."""
    reg = x if isinstance(x, RegularElement) else RegularElement.in_group(group, x)
    if not reg.regular:
        raise InvalidInputError("near-singular regularity certificate")
    return 1.0 / (reg.certificate * lie.j_phi(group))


def limit_rhs(group, x, fs, scheme, nodes=None, with_terms=False):
    """det_{p_M}(Ad_x - Id)^{-1} J_phi^{-1} tau_{a,x}(f_{0,0}, ..., f_{n,0})."""
    c = limit_constant(group, x)
    preset = cartan_motion(group)
    ev = tau_ax(preset, RegularElement.in_group(group, x).x, fs, scheme, nodes)
    est = ev.result.scaled(c)
    return (est, ev) if with_terms else est


@dataclass(frozen=True)
class ConvergenceRow:
    t: float
    lhs: IntegralEstimate
    rhs: IntegralEstimate

    @property
    def abs_diff(self):
        return abs(self.lhs.value - self.rhs.value)

    @property
    def combined_std_error(self):
        return math.hypot(self.lhs.std_error, self.rhs.std_error)

    def csv_fields(self):
        return [self.t, self.lhs.value, self.lhs.std_error, self.rhs.value,
                self.rhs.std_error, self.abs_diff, self.combined_std_error]


CSV_HEADER = "t,lhs,lhs_err,rhs,rhs_err,abs_diff,combined_err"


def _check_grid(ts):
    ts = [float(t) for t in ts]
    if not ts or any(t <= 0 for t in ts):
        raise InvalidInputError("t-grid must be non-empty and positive")
    if any(b >= a for a, b in zip(ts, ts[1:])):
        raise InvalidInputError("t-grid must be strictly decreasing")
    return ts


def convergence_table(ts, group, x, fs, scheme, nodes=None, rhs=None) -> List[ConvergenceRow]:
    """Rows (t, Phi_{P_t,x,t}, rhs) for the limit theorem; rhs computed once."""
    ts = _check_grid(ts)
    if rhs is None:
        rhs = limit_rhs(group, x, fs, scheme.derive(10_000), nodes)
    rows = []
    for i, t in enumerate(ts):
        lhs = phi_px_t(t, group, x, fs, scheme.derive(i), nodes).result
        rows.append(ConvergenceRow(t, lhs, rhs))
    return rows


def trace_limit_rhs(group, x, f, scheme, nodes=None, margin=1.1):
    """int_K int_p f_0(k x k^-1, Ad_{kxk^-1} X - X) dk dX."""
    xm = x.x if isinstance(x, RegularElement) else np.asarray(x, dtype=float)
    c, r = f.support_ball()
    # |(Ad_y - I) X| >= sigma_min |X| and Ad_{kxk^-1} - I is conjugate to Ad_x - I
    A = mc.adjoint_action(xm, group.p_basis) - np.eye(group.dim_p)
    smin = np.linalg.svd(A, compute_uv=False).min()
    if smin < 1e-8:
        raise InvalidInputError("Ad_x - Id is singular on p: x is not regular")
    rad = margin * (float(np.linalg.norm(c)) + r) / smin
    factors = [haar_factor("k", _compact(group), nodes=(nodes or {}).get("k")),
               ball_factor("X", group.dim_p, np.zeros(group.dim_p), rad, (nodes or {}).get("X"))]

    def body(ctx):
        k = ctx["k"]
        y = k @ xm @ np.swapaxes(k, -1, -2)
        Ad = mc.adjoint_action(y, group.p_basis)
        v = np.einsum("...ij,...j->...i", Ad, ctx["X"]) - ctx["X"]
        return f.chart(y, v)

    return integrate(factors, body, scheme).estimate()


def trace_limit_check(group, x, f, ts, scheme, nodes=None) -> List[ConvergenceRow]:
    """Degree-0 rows: the deformed orbital trace against the motion-group side."""
    if group.name != "SL2R":
        raise UnsupportedError(f"{group.name}: rank G != rank K, degree-0 trace limit refused")
    reg = x if isinstance(x, RegularElement) else RegularElement.elliptic(group, x)
    if not reg.regular:
        raise InvalidInputError("x is not regular")
    ts = _check_grid(ts)
    rhs = trace_limit_rhs(group, reg.x, f, scheme.derive(10_000), nodes)
    return [ConvergenceRow(t, conjugation_orbit_t(group, reg, f, scheme.derive(i), t, nodes), rhs)
            for i, t in enumerate(ts)]


def monotone_within_errors(rows, k=3.0):
    """absDiff non-increasing up to k combined standard errors of consecutive rows."""
    return all(b.abs_diff - a.abs_diff <= k * math.hypot(a.combined_std_error, b.combined_std_error)
               for a, b in zip(rows, rows[1:]))


def final_within_errors(rows, k=3.0):
    last = rows[-1]
    return last.abs_diff <= k * last.combined_std_error
