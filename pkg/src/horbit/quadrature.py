"""Integration schemes, Haar and Euclidean node sets, and the product-rule engine.

An integral is described as an ordered list of *factors*.  A factor is either
a finite set of weighted atoms or a continuous map from a unit cube to the
integration variable together with its Jacobian.  A continuous factor may read
the variables produced by earlier factors, so triangular changes of variables
(a ball whose centre depends on an earlier variable, say) are expressed
directly.

The same description is evaluated by

* ``TensorGauss``: tensor products of Gauss-Legendre nodes (trapezoid on
  periodic axes), deterministic, ``std_error = 0``;
* ``QMC``: scrambled Sobol points, ``batches`` independent scramblings;
* ``MC``: pseudo-random points, ``batches`` independent streams.

For the randomized schemes the value is the mean of the batch means and the
standard error is their sample standard deviation over ``sqrt(batches)``.
Finite atoms are always summed exactly.
"""

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import qmc

from .errors import InvalidInputError, PoisonedEstimateError, UnsupportedError

_KINDS = {"tensorgauss": "tensor", "tensor": "tensor", "qmc": "qmc", "mc": "mc"}


@dataclass(frozen=True)
class IntegrationScheme:
    kind: str = "qmc"
    nodes: int = 16
    budget: int = 2 ** 16
    seed: int = 0
    batches: int = 16
    chunk: int = 2 ** 15

    def __post_init__(self):
        kind = _KINDS.get(str(self.kind).lower())
        if kind is None:
            raise InvalidInputError(f"unknown scheme kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.nodes < 1:
            raise InvalidInputError("scheme nodes must be positive")
        if self.budget < 1:
            raise InvalidInputError("scheme budget must be positive")
        if kind != "tensor" and self.batches < 2:
            raise InvalidInputError("randomized schemes need at least 2 batches")

    @property
    def deterministic(self):
        return self.kind == "tensor"

    def derive(self, offset):
        """Same scheme with an independent seed stream."""
        return replace(self, seed=int(np.random.SeedSequence([self.seed, offset]).generate_state(1)[0]))

    def with_budget(self, budget):
        return replace(self, budget=int(budget))

    def with_nodes(self, nodes):
        return replace(self, nodes=int(nodes))


@dataclass(frozen=True)
class IntegralEstimate:
    value: float
    std_error: float
    samples: int

    def to_dict(self):
        return {"value": float(self.value), "stdError": float(self.std_error),
                "samples": int(self.samples)}

    def scaled(self, c):
        return IntegralEstimate(c * self.value, abs(c) * self.std_error, self.samples)


def combine_independent(estimates, coeffs):
    """Linear combination of independent estimates; errors add in quadrature."""
    value = sum(c * e.value for c, e in zip(coeffs, estimates))
    err = math.sqrt(sum((c * e.std_error) ** 2 for c, e in zip(coeffs, estimates)))
    return IntegralEstimate(value, err, sum(e.samples for e in estimates))


@dataclass
class BatchedResult:
    """Per-batch column means of an integral with several integrand columns."""
    batch_values: np.ndarray      # (B, T)
    samples: int
    deterministic: bool

    def estimate(self, coeffs=None):
        vals = self.batch_values if coeffs is None else self.batch_values @ np.asarray(coeffs, float)
        if vals.ndim == 2:
            if vals.shape[1] != 1:
                raise InvalidInputError("several columns: pass coeffs or use column()")
            vals = vals[:, 0]
        if self.deterministic:
            return IntegralEstimate(float(vals[0]), 0.0, self.samples)
        b = vals.shape[0]
        return IntegralEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(b)),
                                self.samples)

    def column(self, i):
        e = np.zeros(self.batch_values.shape[1])
        e[i] = 1.0
        return self.estimate(e)


# ---------------------------------------------------------------- factors

@dataclass
class Atoms:
    """A finite weighted set of values for one variable."""
    name: str
    values: np.ndarray
    weights: np.ndarray

    cube_dim = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.values.shape[0] != self.weights.shape[0]:
            raise InvalidInputError(f"atoms {self.name}: values and weights differ in length")
        if np.any(self.weights < 0):
            raise InvalidInputError(f"atoms {self.name}: negative weight")


@dataclass
class Continuous:
    """A continuous variable given by a map from ``[0,1]^d``.

    ``transform(u, ctx, deterministic)`` returns ``(points, jacobian)`` with
    ``int g = E_u[g(T(u)) * jacobian]`` for ``u`` uniform; in deterministic
    mode ``u`` runs over the reference rule built from ``axes`` ('gl' or
    'periodic').
    """
    name: str
    axes: Sequence[str]
    transform: Callable
    nodes: Optional[object] = None      # int, or one count per axis

    @property
    def cube_dim(self):
        return len(self.axes)


def _axis_rule(kind, n):
    if kind == "periodic":
        return (np.arange(n) + 0.5) / n, np.full(n, 1.0 / n)
    if kind == "gl":
        x, w = leggauss(n)
        return 0.5 * (x + 1.0), 0.5 * w
    raise InvalidInputError(f"unknown axis kind {kind!r}")


def _reference_rule(axes, n):
    ns = list(n) if isinstance(n, (tuple, list)) else [n] * len(axes)
    if len(ns) != len(axes):
        raise InvalidInputError("per-axis node counts do not match the factor's axes")
    rules = [_axis_rule(a, k) for a, k in zip(axes, ns)]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    u = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return u, w


# ---------------------------------------------------------------- compact groups

def rotation2(theta):
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _rot_axis(theta, axis):
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    R = np.zeros(theta.shape + (3, 3))
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    R[..., axis, axis] = 1.0
    R[..., i, i] = c
    R[..., j, j] = c
    R[..., i, j] = -s
    R[..., j, i] = s
    return R


def rotation_x(theta):
    return _rot_axis(theta, 0)


def rotation_y(theta):
    return _rot_axis(theta, 1)


def rotation_z(theta):
    return _rot_axis(theta, 2)


def euler_zyz(alpha, beta, gamma):
    return rotation_z(alpha) @ rotation_y(beta) @ rotation_z(gamma)


def cyclic_elements(m):
    """FiniteCyclic(m) as 3x3 matrices: trivial on e1, rotation by 2 pi j/m on (e2, e3)."""
    return rotation_x(2.0 * np.pi * np.arange(m) / m)


def haar_factor(name, group, m=None, nodes=None):
    """Probability Haar measure on ``group`` in {'SO2', 'SO3', 'circle_e1', 'cyclic'}."""
    if group == "SO2":
        def tr(u, ctx, det):
            return rotation2(2.0 * np.pi * u[:, 0]), np.ones(len(u))
        return Continuous(name, ("periodic",), tr, nodes)
    if group == "circle_e1":
        def tr(u, ctx, det):
            return rotation_x(2.0 * np.pi * u[:, 0]), np.ones(len(u))
        return Continuous(name, ("periodic",), tr, nodes)
    if group == "SO3":
        def tr(u, ctx, det):
            beta = np.arccos(np.clip(1.0 - 2.0 * u[:, 1], -1.0, 1.0))
            return euler_zyz(2.0 * np.pi * u[:, 0], beta, 2.0 * np.pi * u[:, 2]), np.ones(len(u))
        return Continuous(name, ("periodic", "gl", "periodic"), tr, nodes)
    if group == "cyclic":
        if m is None or m < 1:
            raise InvalidInputError("cyclic group needs a positive order m")
        return Atoms(name, cyclic_elements(m), np.full(m, 1.0 / m))
    raise UnsupportedError(f"no Haar rule for compact group {group!r}")


# ---------------------------------------------------------------- Euclidean factors

def _resolve(v, ctx):
    return v(ctx) if callable(v) else v


def box_factor(name, lo, hi, nodes=None):
    """Lebesgue measure on a fixed box ``[lo, hi]``."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    return box_factor_dim(name, len(lo), lo, hi, nodes)


def box_factor_dim(name, dim, lo, hi, nodes=None):
    def tr(u, ctx, det):
        a = np.broadcast_to(np.asarray(_resolve(lo, ctx), dtype=float), (len(u), dim))
        b = np.broadcast_to(np.asarray(_resolve(hi, ctx), dtype=float), (len(u), dim))
        if np.any(b < a):
            raise InvalidInputError(f"box {name}: degenerate bounds")
        return a + (b - a) * u, np.prod(b - a, axis=-1)
    return Continuous(name, ("gl",) * dim, tr, nodes)


def ball_volume(dim, radius):
    return math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0) * np.asarray(radius, float) ** dim


def ball_factor(name, dim, center, radius, nodes=None):
    """Lebesgue measure on a ball; centre and radius may depend on earlier variables.

    Deterministic mode uses polar coordinates with a Gauss-Legendre radius
    (weight ``r^{d-1}`` in the Jacobian), which keeps the node density
    smooth at the centre.  Randomized mode uses a volume-preserving map.
    Dimensions above 3 use the bounding box with an indicator.
    """
    if dim <= 3:
        axes = {1: ("gl",), 2: ("gl", "periodic"), 3: ("gl", "gl", "periodic")}[dim]
    else:
        axes = ("gl",) * dim

    def tr(u, ctx, det):
        N = len(u)
        c = np.broadcast_to(np.asarray(_resolve(center, ctx), dtype=float), (N, dim))
        R = np.broadcast_to(np.asarray(_resolve(radius, ctx), dtype=float), (N,))
        R = np.maximum(R, 0.0)
        if dim == 1:
            return c + (R * (2.0 * u[:, 0] - 1.0))[:, None], 2.0 * R
        if dim > 3:
            pts = c + (R[:, None] * (2.0 * u - 1.0))
            inside = np.linalg.norm(pts - c, axis=-1) <= R
            return pts, (2.0 * R) ** dim * inside
        if det:
            r = R * u[:, 0]
            jac_r = R * r ** (dim - 1)
        else:
            r = R * u[:, 0] ** (1.0 / dim)
            jac_r = None
        if dim == 2:
            th = 2.0 * np.pi * u[:, 1]
            d = np.stack([np.cos(th), np.sin(th)], -1)
            jac = 2.0 * np.pi * jac_r if det else ball_volume(2, R)
        else:
            ct = 1.0 - 2.0 * u[:, 1]
            st = np.sqrt(np.clip(1.0 - ct * ct, 0.0, None))
            ph = 2.0 * np.pi * u[:, 2]
            d = np.stack([st * np.cos(ph), st * np.sin(ph), ct], -1)
            jac = 4.0 * np.pi * jac_r if det else ball_volume(3, R)
        return c + r[:, None] * d, jac

    return Continuous(name, axes, tr, nodes)


def _perp_frame(beta):
    """Two unit vectors completing each row of ``beta`` (N, 3) to an orthonormal frame."""
    helper = np.where(np.abs(beta[:, :1]) < 0.9, np.eye(3)[0], np.eye(3)[1])
    e1 = np.cross(beta, helper)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    return e1, np.cross(beta, e1)


def slab_ball_factor(name, dim, center, radius, direction, lo, hi, nodes=None):
    """Lebesgue measure on ``B(center, radius) & {lo <= direction . v <= hi}``.

    ``direction`` is a unit vector; all arguments may depend on earlier
    variables.  The coordinate along ``direction`` gets its own axis so that
    the slab faces are domain boundaries rather than interior kinks.
    Supports dim <= 3.
    """
    if not 1 <= dim <= 3:
        raise InvalidInputError("slab_ball_factor supports dimensions 1 to 3")
    axes = {1: ("gl",), 2: ("gl", "gl"), 3: ("gl", "gl", "periodic")}[dim]

    def tr(u, ctx, det):
        N = len(u)
        c = np.broadcast_to(np.asarray(_resolve(center, ctx), dtype=float), (N, dim))
        R = np.maximum(np.broadcast_to(np.asarray(_resolve(radius, ctx), dtype=float), (N,)), 0.0)
        beta = np.broadcast_to(np.asarray(_resolve(direction, ctx), dtype=float), (N, dim))
        bc = np.einsum("ij,ij->i", beta, c)
        s_lo = np.maximum(-R, np.broadcast_to(_resolve(lo, ctx), (N,)) - bc)
        s_hi = np.minimum(R, np.broadcast_to(_resolve(hi, ctx), (N,)) - bc)
        span = np.clip(s_hi - s_lo, 0.0, None)
        s = s_lo + span * u[:, 0]
        rho = np.sqrt(np.clip(R * R - s * s, 0.0, None))
        base = c + s[:, None] * beta
        if dim == 1:
            return base, span
        if dim == 2:
            perp = np.stack([-beta[:, 1], beta[:, 0]], -1)
            y = rho * (2.0 * u[:, 1] - 1.0)
            return base + y[:, None] * perp, span * 2.0 * rho
        e1, e2 = _perp_frame(beta)
        if det:
            r = rho * u[:, 1]
            jac = span * rho * r * 2.0 * np.pi
        else:
            r = rho * np.sqrt(u[:, 1])
            jac = span * np.pi * rho * rho
        th = 2.0 * np.pi * u[:, 2]
        pts = base + (r * np.cos(th))[:, None] * e1 + (r * np.sin(th))[:, None] * e2
        return pts, jac

    return Continuous(name, axes, tr, nodes)


# ---------------------------------------------------------------- engine

def _points_for_batch(scheme, batch, n, dim):
    ss = np.random.SeedSequence([scheme.seed, batch])
    rng = np.random.default_rng(ss)
    if scheme.kind == "mc":
        return rng.random((n, dim))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        eng = qmc.Sobol(d=dim, scramble=True, seed=rng, bits=64)
        return eng.random(n)


def _evaluate_chunk(factors, body, cube_parts, atom_idx, base_w, det, extra):
    ctx = dict(extra)
    w = base_w
    for f, part, aidx in zip(factors, cube_parts, atom_idx):
        if isinstance(f, Atoms):
            ctx[f.name] = f.values[aidx]
            w = w * f.weights[aidx]
        else:
            pts, jac = f.transform(part, ctx, det)
            ctx[f.name] = pts
            w = w * jac
    vals = np.asarray(body(ctx), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    contrib = vals * w[:, None]
    bad = ~np.isfinite(contrib)
    if np.any(bad):
        row = int(np.argwhere(bad)[0][0])
        node = {k: np.asarray(v)[row].tolist() for k, v in ctx.items()
                if not k.startswith("_") and np.ndim(v) >= 1 and len(v) == len(w)}
        raise PoisonedEstimateError(f"non-finite integrand at node {node}", node=node)
    return contrib.sum(axis=0)


def integrate(factors, body, scheme, extra=None):
    """Integrate ``body(ctx)`` over the product of ``factors``.

    ``body`` receives a dict mapping factor names to arrays of points and
    returns one value per point, or a ``(points, T)`` array of columns that
    are integrated simultaneously.
    """
    extra = dict(extra or {})
    cont = [f for f in factors if not isinstance(f, Atoms)]
    det = scheme.deterministic or not cont
    chunk = scheme.chunk
    if det:
        sizes, refs = [], []
        for f in factors:
            if isinstance(f, Atoms):
                sizes.append(len(f.weights))
                refs.append(None)
            else:
                u, w = _reference_rule(f.axes, f.nodes or scheme.nodes)
                sizes.append(len(w))
                refs.append((u, w))
        total = int(np.prod(sizes)) if sizes else 1
        acc = None
        extra["_batch"] = 0
        extra["_seed"] = scheme.seed
        for start in range(0, total, chunk):
            flat = np.arange(start, min(total, start + chunk))
            idx = np.unravel_index(flat, sizes) if sizes else ()
            parts, aidx, w = [], [], np.ones(len(flat))
            for f, r, i in zip(factors, refs, idx):
                if r is None:
                    parts.append(None)
                    aidx.append(i)
                else:
                    parts.append(r[0][i])
                    aidx.append(None)
                    w = w * r[1][i]
            s = _evaluate_chunk(factors, body, parts, aidx, w, True, extra)
            acc = s if acc is None else acc + s
        return BatchedResult(acc[None, :], total, True)

    atom_sizes = [len(f.weights) for f in factors if isinstance(f, Atoms)]
    A = int(np.prod(atom_sizes)) if atom_sizes else 1
    D = sum(f.cube_dim for f in cont)
    n_b = max(1, scheme.budget // scheme.batches)
    out = []
    for b in range(scheme.batches):
        U = _points_for_batch(scheme, b, n_b, D)
        extra["_batch"] = b
        extra["_seed"] = int(np.random.SeedSequence([scheme.seed, b, 7]).generate_state(1)[0])
        total = n_b * A
        acc = None
        for start in range(0, total, chunk):
            flat = np.arange(start, min(total, start + chunk))
            p_idx, a_flat = np.divmod(flat, A)
            a_idx = list(np.unravel_index(a_flat, atom_sizes)) if atom_sizes else []
            parts, aidx, off = [], [], 0
            for f in factors:
                if isinstance(f, Atoms):
                    parts.append(None)
                    aidx.append(a_idx.pop(0))
                else:
                    parts.append(U[p_idx, off:off + f.cube_dim])
                    aidx.append(None)
                    off += f.cube_dim
            s = _evaluate_chunk(factors, body, parts, aidx,
                                np.full(len(flat), 1.0 / n_b), False, extra)
            acc = s if acc is None else acc + s
        out.append(acc)
    return BatchedResult(np.array(out), n_b * A * scheme.batches, False)


def integrate_scalar(factors, body, scheme, extra=None):
    return integrate(factors, body, scheme, extra).estimate()


# ---------------------------------------------------------------- public node sets

def _materialize(factor, scheme, batch=0):
    if isinstance(factor, Atoms):
        return factor.values, factor.weights
    if scheme.deterministic:
        u, w = _reference_rule(factor.axes, factor.nodes or scheme.nodes)
        pts, jac = factor.transform(u, {}, True)
        return pts, w * jac
    n = max(1, scheme.budget // scheme.batches)
    u = _points_for_batch(scheme, batch, n, factor.cube_dim)
    pts, jac = factor.transform(u, {}, False)
    return pts, jac / n


def haar_nodes(group, scheme, m=None, batch=0):
    """Weighted nodes of the probability Haar measure (weights sum to 1)."""
    return _materialize(haar_factor("k", group, m), scheme, batch)


def euclidean_nodes(dim, lo, hi, scheme, batch=0):
    """Weighted nodes for Lebesgue measure on the box ``[lo, hi]``."""
    lo = np.broadcast_to(np.asarray(lo, float), (dim,))
    hi = np.broadcast_to(np.asarray(hi, float), (dim,))
    if np.any(hi <= lo):
        raise InvalidInputError("euclidean_nodes: degenerate box")
    return _materialize(box_factor_dim("v", dim, lo, hi), scheme, batch)


def product_nodes(factors, scheme, seed=None):
    """Materialise a product rule as explicit nodes and weights.

    Deterministic schemes give the full tensor rule; randomized schemes give
    one scrambled point set of ``scheme.budget`` points drawn from ``seed``.
    Returns ``(ctx, weights)`` with ``ctx`` mapping factor names to arrays.
    """
    cont = [f for f in factors if not isinstance(f, Atoms)]
    sizes = [len(f.weights) if isinstance(f, Atoms) else None for f in factors]
    if scheme.deterministic or not cont:
        rules = []
        for f in factors:
            if isinstance(f, Atoms):
                rules.append(None)
            else:
                rules.append(_reference_rule(f.axes, f.nodes or scheme.nodes))
        shape = [len(f.weights) if r is None else len(r[1]) for f, r in zip(factors, rules)]
        idx = np.unravel_index(np.arange(int(np.prod(shape))), shape)
        ctx, w = {}, np.ones(len(idx[0]))
        for f, r, i in zip(factors, rules, idx):
            if r is None:
                ctx[f.name] = f.values[i]
                w = w * f.weights[i]
            else:
                pts, jac = f.transform(r[0][i], ctx, True)
                ctx[f.name] = pts
                w = w * r[1][i] * jac
        return ctx, w
    D = sum(f.cube_dim for f in cont)
    n = scheme.budget
    rng = np.random.default_rng(np.random.SeedSequence([scheme.seed if seed is None else seed, 11]))
    if scheme.kind == "mc":
        U = rng.random((n, D))
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            U = qmc.Sobol(d=D, scramble=True, seed=rng, bits=64).random(n)
    atom_sizes = [s for s in sizes if s is not None]
    A = int(np.prod(atom_sizes)) if atom_sizes else 1
    p_idx, a_flat = np.divmod(np.arange(n * A), A)
    a_idx = list(np.unravel_index(a_flat, atom_sizes)) if atom_sizes else []
    ctx, w, off = {}, np.full(n * A, 1.0 / n), 0
    for f in factors:
        if isinstance(f, Atoms):
            i = a_idx.pop(0)
            ctx[f.name] = f.values[i]
            w = w * f.weights[i]
        else:
            pts, jac = f.transform(U[p_idx, off:off + f.cube_dim], ctx, False)
            off += f.cube_dim
            ctx[f.name] = pts
            w = w * jac
    return ctx, w
