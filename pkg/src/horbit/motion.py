"""Motion groups ``K x| V`` and Cartan motion groups ``K x| p``.

Elements of ``K`` are stored as matrices: 2x2 rotations for ``SO2``, 3x3
rotations for ``SO3`` and for ``FiniteCyclic(m)`` (rotations about ``e1``),
and ``SO(n)`` matrices for the Cartan motion group of ``SL(n,R)``.  The
linear action on ``V`` is :meth:`MotionPreset.action`.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import matrix_core as mc
from .errors import InvalidInputError
from .lie import GroupPreset, load_preset, quotient_representatives
from .quadrature import Atoms, cyclic_elements, haar_factor, rotation_x


@dataclass(frozen=True, eq=False)
class MotionPreset:
    name: str
    compact: str                  # 'SO2', 'SO3' or 'cyclic'
    dim_V: int
    A: np.ndarray                 # (n, dim_V) orthonormal rows
    Aperp: np.ndarray             # (dim_V - n, dim_V) orthonormal rows
    m: Optional[int] = None
    group: Optional[GroupPreset] = None
    stabilizer: str = "finite"    # 'finite' or 'circle_e1'
    M_K: Optional[np.ndarray] = field(default=None)

    @property
    def cartan(self):
        return self.group is not None

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def k_dim(self):
        """Matrix size of the stored compact-group elements."""
        if self.group is not None:
            return self.group.n
        return 2 if self.compact == "SO2" else 3

    def action(self, k):
        """Matrix of ``v -> k.v`` on V, batched over ``k``."""
        k = np.asarray(k, dtype=float)
        if self.group is not None:
            return mc.adjoint_action(k, self.group.p_basis)
        return k

    def act(self, k, v):
        return np.einsum("...ij,...j->...i", self.action(k), v)

    def act_inv(self, k, v):
        return np.einsum("...ji,...j->...i", self.action(k), v)

    def haar(self, name, nodes=None):
        """Probability Haar factor on K."""
        return haar_factor(name, self.compact, m=self.m, nodes=nodes)


def finite_cyclic(m=3):
    """FiniteCyclic(m) acting on R^3 = R (trivial) + R^2 (rotation), A = the trivial line."""
    if m < 1:
        raise InvalidInputError("FiniteCyclic needs m >= 1")
    return MotionPreset(name=f"FiniteCyclic({m})", compact="cyclic", dim_V=3,
                        A=np.eye(3)[:1], Aperp=np.eye(3)[1:], m=m,
                        M_K=cyclic_elements(m))


def se3():
    """SO(3) x| R^3 with A = span(e1); M_K is the circle of rotations about e1."""
    return MotionPreset(name="SE3", compact="SO3", dim_V=3, A=np.eye(3)[:1],
                        Aperp=np.eye(3)[1:], stabilizer="circle_e1")


def se2():
    """SO(2) x| R^2 with A = span(e1); M_K is trivial."""
    return MotionPreset(name="SE2", compact="SO2", dim_V=2, A=np.eye(2)[:1],
                        Aperp=np.eye(2)[1:], M_K=np.eye(2)[None])


def cartan_motion(group):
    """Cartan motion group ``K x| p`` of a reductive preset with ``A = a``.

    V is p in the coordinates of ``group.p_basis``; ``M_K`` is computed as the
    stabilizer of ``a`` among the candidate sign matrices and must coincide
    with the finite group M of the preset.
    """
    if isinstance(group, str):
        group = load_preset(group)
    A = mc.coords(group.a_basis, group.p_basis)
    # orthonormal complement of A inside p coordinates
    _, _, Vt = np.linalg.svd(A)
    Aperp = Vt[A.shape[0]:]
    compact = "SO2" if group.n == 2 else "SO3"
    return MotionPreset(name=f"CartanMotion({group.name})", compact=compact,
                        dim_V=group.dim_p, A=A, Aperp=Aperp, group=group,
                        M_K=np.array(group.M))


def motion_preset(name, **params):
    """Build a motion preset by name: FiniteCyclic, SE2, SE3, CartanMotion."""
    if name == "FiniteCyclic":
        return finite_cyclic(int(params.get("m", 3)))
    if name == "SE3":
        return se3()
    if name == "SE2":
        return se2()
    if name == "CartanMotion":
        return cartan_motion(params.get("group", "SL2R"))
    raise InvalidInputError(f"unknown motion preset {name!r}")


# ---------------------------------------------------------------- group law

@dataclass(frozen=True, eq=False)
class MotionElement:
    k: np.ndarray
    v: np.ndarray


def _same_preset(preset, a):
    if a.k.shape[-1] != preset.k_dim or a.v.shape[-1] != preset.dim_V:
        raise InvalidInputError(f"element does not belong to {preset.name}")


def mot_mul(preset, a, b):
    """(k0, v0)(k1, v1) = (k0 k1, k1^{-1}.v0 + v1)."""
    _same_preset(preset, a)
    _same_preset(preset, b)
    return MotionElement(a.k @ b.k, preset.act_inv(b.k, a.v) + b.v)


def mot_inv(preset, a):
    """(k, v)^{-1} = (k^{-1}, -k.v)."""
    _same_preset(preset, a)
    return MotionElement(np.swapaxes(a.k, -1, -2), -preset.act(a.k, a.v))


def identity(preset):
    return MotionElement(np.eye(preset.k_dim), np.zeros(preset.dim_V))


def h_component(preset, j, v):
    """H_j(v) = <v, e_j> for 1 <= j <= n."""
    if not 1 <= j <= preset.n:
        raise InvalidInputError(f"H_j index {j} out of range 1..{preset.n}")
    return np.asarray(v, dtype=float) @ preset.A[j - 1]


def h_components(preset, v):
    """All H_j(v) at once, shape (..., n)."""
    return np.asarray(v, dtype=float) @ preset.A.T


def split_a_aperp(preset, v):
    v = np.asarray(v, dtype=float)
    a = (v @ preset.A.T) @ preset.A
    return a, v - a


# ---------------------------------------------------------------- stabilizer

def in_M_K(preset, x, tol=1e-10):
    x = np.asarray(x, dtype=float)
    if x.shape != (preset.k_dim, preset.k_dim):
        return False
    if np.abs(x.T @ x - np.eye(preset.k_dim)).max() > tol or np.linalg.det(x) < 0:
        return False
    if preset.compact == "cyclic" and not any(np.abs(x - m).max() <= tol for m in preset.M_K):
        return False
    return bool(np.abs(preset.act(x, preset.A) - preset.A).max() <= tol)


def mk_stabilizer_samples(preset, x=None, nodes=64, name="h"):
    """Weighted nodes over M_K, or over M_K / Z_{M_K}(x) when ``x`` is given.

    Finite ``M_K`` gives uniform atoms; the circle stabilizer of SE3 gives
    ``nodes`` uniform angles, and its quotient by the centraliser of any of
    its elements is a point because the circle is abelian.
    """
    if x is not None and not in_M_K(preset, x):
        raise InvalidInputError("x is not in the stabilizer M_K")
    if preset.stabilizer == "circle_e1":
        if x is not None:
            return Atoms(name, np.eye(3)[None], np.ones(1))
        ang = 2.0 * np.pi * (np.arange(nodes) + 0.5) / nodes
        return Atoms(name, rotation_x(ang), np.full(nodes, 1.0 / nodes))
    elems = preset.M_K
    if x is not None:
        elems = quotient_representatives(elems, np.asarray(x, dtype=float))
    return Atoms(name, elems, np.full(len(elems), 1.0 / len(elems)))


def centralizer_of_a(preset, tol=1e-10):
    """Z_K(a) among the sign matrices of determinant one (candidate superset of M)."""
    from itertools import product
    n = preset.group.n
    out = []
    for signs in product((1.0, -1.0), repeat=n):
        if np.prod(signs) < 0:
            continue
        k = np.diag(signs)
        if all(np.abs(k @ H @ k.T - H).max() <= tol for H in preset.group.a_basis):
            out.append(k)
    return np.array(out)
