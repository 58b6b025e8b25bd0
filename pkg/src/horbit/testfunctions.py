"""Smooth compactly supported test functions and their lazy convolutions.

A test function is ``F(k, v) = P(k) * b(v)`` with ``P`` a polynomial in the
matrix entries of ``k`` and ``b`` the standard bump
``exp(-1 / (1 - |v - c|^2 / r^2))`` on the ball ``B(c, r)``.  The same chart
function serves three domains:

* motion group ``K x| V``: ``f(k, v) = F(k, v)``;
* reductive group ``G``: ``f(k exp X) = F(k, coords(X))``;
* deformation space: ``f_t(k exp(tX)) = F(k, coords(X))``, ``f_0 = F``.
"""

import math
import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import make_interp_spline

from . import lie
from . import matrix_core as mc
from .errors import InvalidInputError
from .quadrature import ball_factor, product_nodes

DOMAINS = ("motion", "group", "deformation")


def bump_profile(q):
    """exp(-1/(1-q)) for q < 1 and 0 otherwise, with q = |v-c|^2 / r^2."""
    q = np.asarray(q, dtype=float)
    out = np.zeros_like(q)
    inside = q < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - q[inside]))
    return out


@dataclass(frozen=True)
class CompactPolynomial:
    """sum_t coeff_t * prod_{(i,j) in t} k[i, j]; the empty product is 1."""
    terms: Tuple[Tuple[float, Tuple[Tuple[int, int], ...]], ...] = ((1.0, ()),)

    @classmethod
    def from_config(cls, terms):
        return cls(tuple((float(c), tuple((int(i), int(j)) for i, j in mon)) for c, mon in terms))

    @classmethod
    def constant(cls, c=1.0):
        return cls(((float(c), ()),))

    def to_config(self):
        return [[c, [list(ij) for ij in mon]] for c, mon in self.terms]

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        out = np.zeros(k.shape[:-2])
        for c, mon in self.terms:
            term = np.full(k.shape[:-2], c)
            for i, j in mon:
                term = term * k[..., i, j]
            out = out + term
        return out


class Function:
    """Common interface; subclasses implement the values they support."""
    domain = "motion"

    def motion_value(self, k, v, ctx=None):
        raise InvalidInputError(f"{type(self).__name__} has no motion-group values")

    def group_value(self, g, ctx=None):
        raise InvalidInputError(f"{type(self).__name__} has no group values")

    def fiber_value(self, g, t, ctx=None):
        raise InvalidInputError(f"{type(self).__name__} has no deformation values")

    def support_ball(self):
        raise NotImplementedError

    def op_radius(self):
        raise InvalidInputError(f"{type(self).__name__} has no group support")

    def __mul__(self, c):
        return LinearCombination(((float(c), self),))

    __rmul__ = __mul__

    def __add__(self, other):
        return LinearCombination(((1.0, self), (1.0, other)))


@dataclass(frozen=True, eq=False)
class TestFunction(Function):
    compact: CompactPolynomial
    center: np.ndarray
    radius: float
    domain: str = "motion"
    group: Optional[lie.GroupPreset] = None

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise InvalidInputError(f"unknown domain {self.domain!r}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise InvalidInputError("bump radius must be positive")
        if self.domain != "motion":
            if self.group is None:
                raise InvalidInputError("group and deformation functions need a group preset")
            if self.center.shape != (self.group.dim_p,):
                raise InvalidInputError("bump centre must have dim p coordinates")

    def chart(self, k, v):
        """F(k, v) = P(k) * bump(v)."""
        d = np.asarray(v, dtype=float) - self.center
        q = np.einsum("...i,...i->...", d, d) / self.radius ** 2
        return self.compact(k) * bump_profile(q)

    def motion_value(self, k, v, ctx=None):
        return self.chart(k, v)

    def group_value(self, g, ctx=None):
        if self.group is None:
            raise InvalidInputError("motion-group function evaluated on a reductive group")
        k, X = lie.cartan_decompose(g)
        return self.chart(k, self.group.p_coords(X))

    def fiber_value(self, g, t, ctx=None):
        if t == 0:
            raise InvalidInputError("fiber_value at t = 0: use chart(k, X) on the motion group")
        if self.group is None:
            raise InvalidInputError("motion-group function evaluated on a deformation fiber")
        k, X = lie.cartan_decompose(g)
        return self.chart(k, self.group.p_coords(X) / t)

    def support_ball(self):
        return self.center, float(self.radius)

    def op_radius(self):
        return self.group.op_radius(self.center, self.radius)

    def as_domain(self, domain):
        return TestFunction(self.compact, self.center, self.radius, domain, self.group)


class DeformationFunction(TestFunction):
    """A t-independent chart function F(k, X) on the deformation space."""

    def __init__(self, compact, center, radius, group):
        super().__init__(compact, center, radius, "deformation", group)

    def point(self, k, X, t):
        """Value at the chart point (k, X, t); equal to F(k, X) for every t."""
        return self.chart(k, X)

    def group_element(self, k, X, t):
        return np.asarray(k) @ mc.mat_exp(t * self.group.p_matrix(X))


@dataclass(frozen=True, eq=False)
class LinearCombination(Function):
    terms: Tuple[Tuple[float, Function], ...]

    @property
    def domain(self):
        return self.terms[0][1].domain

    @property
    def group(self):
        return getattr(self.terms[0][1], "group", None)

    def _sum(self, method, *args):
        out = 0.0
        for c, f in self.terms:
            if c != 0.0:
                out = out + c * getattr(f, method)(*args)
        if np.isscalar(out):
            out = np.zeros(np.shape(args[0])[:-2])
        return out

    def chart(self, k, v):
        return self._sum("chart", k, v)

    def motion_value(self, k, v, ctx=None):
        return self._sum("motion_value", k, v, ctx)

    def group_value(self, g, ctx=None):
        return self._sum("group_value", g, ctx)

    def fiber_value(self, g, t, ctx=None):
        return self._sum("fiber_value", g, t, ctx)

    def support_ball(self):
        balls = [f.support_ball() for _, f in self.terms]
        c = np.mean([b[0] for b in balls], axis=0)
        r = max(float(np.linalg.norm(b[0] - c)) + b[1] for b in balls)
        return c, r

    def op_radius(self):
        return max(f.op_radius() for _, f in self.terms)


def zero_like(f):
    """The zero function on the same domain and support as ``f``."""
    return LinearCombination(((0.0, f),))


# ---------------------------------------------------------------- radial overlap

_PSI_CACHE = {}
_PSI_LOCK = threading.Lock()


def _overlap_direct(D, rf, rg, dim, n=96):
    """Psi(D) = int b_f(|y|) b_g(|y - D e|) dy for standard bumps of radii rf, rg."""
    x, w = leggauss(n)
    D = max(float(D), 1e-300)
    lo, hi = (max(-rf, D - rg), min(rf, D + rg)) if dim == 1 else (max(0.0, D - rg), min(rf, D + rg))
    if hi <= lo:
        return 0.0
    s = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    ws = 0.5 * (hi - lo) * w
    bf = bump_profile(s * s / rf ** 2)
    if dim == 1:
        return float(np.sum(ws * bf * bump_profile((s - D) ** 2 / rg ** 2)))
    mu0 = (s * s + D * D - rg * rg) / (2.0 * s * D)
    th_max = np.arccos(np.clip(mu0, -1.0, 1.0))                    # (n,)
    th = 0.5 * th_max[:, None] * (x[None, :] + 1.0)                # (n, n)
    wt = 0.5 * th_max[:, None] * w[None, :]
    dist2 = s[:, None] ** 2 + D * D - 2.0 * s[:, None] * D * np.cos(th)
    inner = np.sum(wt * bump_profile(dist2 / rg ** 2) * np.sin(th) ** (dim - 2), axis=1)
    sphere = 2.0 * math.pi ** ((dim - 1) / 2.0) / math.gamma((dim - 1) / 2.0)
    return float(sphere * np.sum(ws * bf * s ** (dim - 1) * inner))


def radial_overlap(D, rf, rg, dim):
    """Tabulated Psi(D) (quintic spline on 2049 points), cached per (rf, rg, dim)."""
    key = (float(rf), float(rg), int(dim))
    with _PSI_LOCK:
        spl = _PSI_CACHE.get(key)
        if spl is None:
            grid = np.linspace(0.0, rf + rg, 2049)
            vals = np.array([_overlap_direct(d, rf, rg, dim) for d in grid])
            spl = make_interp_spline(grid, vals, k=5)
            _PSI_CACHE[key] = spl
    D = np.asarray(D, dtype=float)
    out = np.zeros_like(D)
    inside = D < rf + rg
    out[inside] = spl(D[inside])
    return out


# ---------------------------------------------------------------- convolutions

def _inner_rule(owner, ctx, factors):
    scheme = owner.scheme
    if scheme.deterministic:
        key = None
        seed = scheme.seed
    else:
        seed = ctx.get("_seed", scheme.seed) if ctx else scheme.seed
        key = seed
    with owner._lock:
        hit = owner._nodes.get(key)
    if hit is not None:
        return hit
    nodes = product_nodes(factors, scheme, seed=seed)
    with owner._lock:
        if len(owner._nodes) > 64:
            owner._nodes.clear()
        owner._nodes[key] = nodes
    return nodes


def _chunked(n_outer, n_inner, budget=2 ** 21):
    step = max(1, budget // max(1, n_inner))
    for s in range(0, n_outer, step):
        yield slice(s, min(n_outer, s + step))


class MotionConvolution(Function):
    """(f*g)(z) = int_{G_0} f(y) g(y^{-1} z) dy on a motion group, evaluated lazily.

    When both factors are plain bumps the vector integral reduces exactly to
    the tabulated radial overlap; otherwise the inner integral over ``K`` and
    the support ball of ``f`` uses ``scheme``.
    """
    domain = "motion"

    def __init__(self, f, g, preset, scheme):
        if f.domain != "motion" or g.domain != "motion":
            raise InvalidInputError("motion convolution needs motion-group functions")
        self.f, self.g, self.preset, self.scheme = f, g, preset, scheme
        self._lock = threading.Lock()
        self._nodes = {}

    def _bump_pair(self):
        return (isinstance(self.f, TestFunction) and isinstance(self.g, TestFunction))

    def support_ball(self):
        cf, rf = self.f.support_ball()
        cg, rg = self.g.support_ball()
        return cg, rg + float(np.linalg.norm(cf)) + rf

    def motion_value(self, k, v, ctx=None):
        k = np.asarray(k, dtype=float)
        v = np.asarray(v, dtype=float)
        P = self.preset
        kf = P.haar("kp", nodes=self.scheme.nodes)
        if self._bump_pair():
            rule_ctx, w = _inner_rule(self, ctx, [kf])
            kp, wk = rule_ctx["kp"], w
            out = np.zeros(k.shape[:-2])
            # R = k^{-1} k' acting on V; Psi(|v - c_g - R c_f|)
            for sl in _chunked(len(out), len(wk)):
                kk = k[sl]
                rel = np.swapaxes(kk, -1, -2)[:, None] @ kp[None]          # k^{-1} k'
                Rcf = P.act(rel, self.f.center)
                D = np.linalg.norm(v[sl, None, :] - self.g.center - Rcf, axis=-1)
                pf = self.f.compact(kp)[None, :]
                pg = self.g.compact(np.swapaxes(kp, -1, -2)[None] @ kk[:, None])
                psi = radial_overlap(D, self.f.radius, self.g.radius, P.dim_V)
                out[sl] = np.sum(wk[None, :] * pf * pg * psi, axis=1)
            return out
        cf, rf = self.f.support_ball()
        vf = ball_factor("vp", P.dim_V, cf, rf)
        rule_ctx, w = _inner_rule(self, ctx, [kf, vf])
        kp, vp = rule_ctx["kp"], rule_ctx["vp"]
        fvals = self.f.motion_value(kp, vp, ctx)
        keep = fvals != 0.0
        kp, vp, fw = kp[keep], vp[keep], (fvals * w)[keep]
        out = np.zeros(k.shape[:-2])
        for sl in _chunked(len(out), len(fw)):
            kk = k[sl]
            k2 = np.swapaxes(kp, -1, -2)[None] @ kk[:, None]               # k'^{-1} k
            rel = np.swapaxes(kk, -1, -2)[:, None] @ kp[None]              # k^{-1} k'
            v2 = v[sl, None, :] - P.act(rel, vp[None])
            nb, ni = k2.shape[:2]
            gv = self.g.motion_value(k2.reshape((-1,) + k2.shape[2:]),
                                     v2.reshape(-1, P.dim_V), ctx).reshape(nb, ni)
            out[sl] = gv @ fw
        return out


class GroupConvolution(Function):
    """(f*g)(z) = int_G f(y) g(y^{-1} z) dy on a reductive preset, y = k' exp(X')."""
    domain = "group"

    def __init__(self, f, g, group, scheme):
        if f.domain != "group" or g.domain != "group":
            raise InvalidInputError("group convolution needs reductive-group functions")
        self.f, self.g, self.group, self.scheme = f, g, group, scheme
        self._lock = threading.Lock()
        self._nodes = {}

    def op_radius(self):
        return self.f.op_radius() + self.g.op_radius()

    def support_ball(self):
        return np.zeros(self.group.dim_p), math.sqrt(self.group.n) * self.op_radius()

    def _y_ball(self):
        if isinstance(self.f, TestFunction):
            return self.f.support_ball()
        return np.zeros(self.group.dim_p), math.sqrt(self.group.n) * self.f.op_radius()

    def group_value(self, z, ctx=None):
        G = self.group
        z = np.asarray(z, dtype=float)
        kf = _compact_haar(G, "kp", self.scheme.nodes)
        c, r = self._y_ball()
        xf = ball_factor("xp", G.dim_p, c, r)
        rule_ctx, w = _inner_rule(self, ctx, [kf, xf])
        Xm = G.p_matrix(rule_ctx["xp"])
        y = rule_ctx["kp"] @ mc.mat_exp(Xm)
        fw = self.f.group_value(y, ctx) * G.jacobian_J(Xm) * w
        keep = fw != 0.0
        yinv = np.linalg.inv(y[keep])
        fw = fw[keep]
        out = np.zeros(z.shape[:-2])
        for sl in _chunked(len(out), len(fw)):
            prod = yinv[None] @ z[sl, None]
            nb, ni = prod.shape[:2]
            gv = self.g.group_value(prod.reshape((-1,) + prod.shape[2:]), ctx).reshape(nb, ni)
            out[sl] = gv @ fw
        return out


def _compact_haar(group, name, nodes=None):
    from .quadrature import haar_factor
    return haar_factor(name, "SO2" if group.n == 2 else "SO3", nodes=nodes)


def convolve(f, g, scheme, preset):
    """Lazy convolution ``f * g``; ``preset`` is a MotionPreset or a GroupPreset."""
    if f.domain != g.domain:
        raise InvalidInputError("convolution of functions on different domains")
    if f.domain == "motion":
        return MotionConvolution(f, g, preset, scheme)
    if f.domain == "group":
        return GroupConvolution(f, g, preset, scheme)
    raise InvalidInputError("convolution on the deformation space is not supported")
