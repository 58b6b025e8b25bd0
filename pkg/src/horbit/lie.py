"""Structure theory of the reductive presets SL(2,R) and SL(3,R).

A :class:`GroupPreset` holds orthonormal bases (trace form) for
``k, p, a_s, n_s, a, n, p_M``, the positive restricted roots with
multiplicities and the finite group ``M`` of the minimal parabolic.  The
tables live in ``presets/*.json``; :func:`build_sl_preset` regenerates them
from scratch and the tests pin one against the other.
"""

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from itertools import product

import numpy as np

from . import matrix_core as mc
from .errors import (InternalConsistencyError, InvalidInputError,
                     NumericOverflowError, UnsupportedError)

PRESET_NAMES = ("SL2R", "SL3R")


@dataclass(frozen=True, eq=False)
class GroupPreset:
    name: str
    n: int
    k_basis: np.ndarray
    p_basis: np.ndarray
    a_s_basis: np.ndarray
    n_s_basis: np.ndarray
    a_basis: np.ndarray
    n_basis: np.ndarray
    p_M_basis: np.ndarray
    root_coeffs: np.ndarray      # (r, dim a_s): alpha(H) = coeffs . coords(H)
    root_mults: np.ndarray       # (r,)
    M: np.ndarray                # (|M|, n, n)

    @property
    def dim_g(self):
        return self.k_basis.shape[0] + self.p_basis.shape[0]

    @property
    def dim_k(self):
        return self.k_basis.shape[0]

    @property
    def dim_p(self):
        return self.p_basis.shape[0]

    @property
    def dim_a(self):
        return self.a_basis.shape[0]

    @property
    def dim_n(self):
        return self.n_basis.shape[0]

    @property
    def rho_coeffs(self):
        return 0.5 * (self.root_mults[:, None] * self.root_coeffs).sum(axis=0)

    # coordinate helpers
    def p_coords(self, X):
        return mc.coords(X, self.p_basis)

    def p_matrix(self, c):
        return mc.from_coords(c, self.p_basis)

    def a_coords(self, H):
        return mc.coords(H, self.a_basis)

    def a_matrix(self, c):
        return mc.from_coords(c, self.a_basis)

    def n_coords(self, Y):
        return mc.coords(Y, self.n_basis)

    def n_matrix(self, c):
        return mc.from_coords(c, self.n_basis)

    def jacobian_J(self, X):
        """``J(X)`` for ``X`` in ``p`` given as a matrix."""
        return mc.analytic_jacobian_J(X, self.p_basis)

    def op_radius(self, center, radius):
        """Operator-norm bound of ``X`` over the ball ``B(center, radius)`` in p-coordinates.

        For traceless symmetric ``X`` the largest eigenvalue modulus is at most
        ``sqrt((n-1)/n)`` times the Frobenius norm.
        """
        return math.sqrt((self.n - 1) / self.n) * (float(np.linalg.norm(center)) + radius)

    def to_json(self):
        def mats(a):
            return [m.tolist() for m in a]
        return {
            "name": self.name,
            "n": self.n,
            "k_basis": mats(self.k_basis),
            "p_basis": mats(self.p_basis),
            "a_s_basis": mats(self.a_s_basis),
            "n_s_basis": mats(self.n_s_basis),
            "a_basis": mats(self.a_basis),
            "n_basis": mats(self.n_basis),
            "p_M_basis": mats(self.p_M_basis),
            "roots": [{"coeffs": c.tolist(), "multiplicity": int(m)}
                      for c, m in zip(self.root_coeffs, self.root_mults)],
            "M": mats(self.M),
            "parabolic": "minimal",
        }


def _unit(n, i, j):
    E = np.zeros((n, n))
    E[i, j] = 1.0
    return E


def build_sl_preset(n):
    """Construct the SL(n,R) preset with its minimal parabolic from first principles."""
    if n not in (2, 3):
        raise UnsupportedError(f"SL({n},R) is not a preset")
    s2 = math.sqrt(2.0)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    k_basis = np.array([(_unit(n, i, j) - _unit(n, j, i)) / s2 for i, j in pairs])
    # orthonormal traceless diagonals: diag(1,-1,0..)/sqrt2, diag(1,1,-2,..)/sqrt6, ...
    diag = []
    for m in range(1, n):
        d = np.zeros(n)
        d[:m] = 1.0
        d[m] = -float(m)
        diag.append(np.diag(d / math.sqrt(m * (m + 1))))
    a_s_basis = np.array(diag)
    sym = np.array([(_unit(n, i, j) + _unit(n, j, i)) / s2 for i, j in pairs])
    p_basis = np.concatenate([a_s_basis, sym])
    n_s_basis = np.array([_unit(n, i, j) for i, j in pairs])
    root_coeffs = np.array([[H[i, i] - H[j, j] for H in a_s_basis] for i, j in pairs])
    root_mults = np.ones(len(pairs), dtype=int)
    M = []
    for signs in product((1.0, -1.0), repeat=n):
        if np.prod(signs) > 0:
            M.append(np.diag(signs))
    return GroupPreset(
        name=f"SL{n}R", n=n, k_basis=k_basis, p_basis=p_basis,
        a_s_basis=a_s_basis, n_s_basis=n_s_basis,
        a_basis=a_s_basis.copy(), n_basis=n_s_basis.copy(),
        p_M_basis=np.zeros((0, n, n)),
        root_coeffs=root_coeffs, root_mults=root_mults, M=np.array(M))


def preset_from_json(data):
    def arr(key, n):
        a = np.array(data[key], dtype=float)
        return a.reshape((-1, n, n)) if a.size else np.zeros((0, n, n))
    n = int(data["n"])
    return GroupPreset(
        name=data["name"], n=n,
        k_basis=arr("k_basis", n), p_basis=arr("p_basis", n),
        a_s_basis=arr("a_s_basis", n), n_s_basis=arr("n_s_basis", n),
        a_basis=arr("a_basis", n), n_basis=arr("n_basis", n),
        p_M_basis=arr("p_M_basis", n),
        root_coeffs=np.array([r["coeffs"] for r in data["roots"]], dtype=float),
        root_mults=np.array([r["multiplicity"] for r in data["roots"]], dtype=int),
        M=arr("M", n))


@lru_cache(maxsize=None)
def load_preset(name):
    """Load a preset table from the packaged JSON files."""
    if name not in PRESET_NAMES:
        raise InvalidInputError(f"unknown group preset {name!r}; expected one of {PRESET_NAMES}")
    text = resources.files("horbit").joinpath("presets", f"{name.lower()}.json").read_text()
    return preset_from_json(json.loads(text))


# ---------------------------------------------------------------- algebra maps

def cartan_involution(X):
    """theta X = -X^T."""
    return -np.swapaxes(np.asarray(X, dtype=float), -1, -2)


def phi_map(X):
    """phi(X) = (X - theta X)/2, the projection onto p."""
    X = np.asarray(X, dtype=float)
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def j_phi_gram(preset):
    """sqrt of the Gram determinant of phi on the basis of a + n, measured in p."""
    imgs = np.concatenate([phi_map(preset.a_basis), phi_map(preset.n_basis)])
    C = mc.coords(imgs, preset.p_basis)
    gram = C @ C.T
    return math.sqrt(abs(np.linalg.det(gram)))


def j_phi(preset):
    """Jacobian 2^{-dim n / 2} of phi: a + n -> a + phi(n), with a Gram self check."""
    closed = 2.0 ** (-preset.dim_n / 2.0)
    gram = j_phi_gram(preset)
    if abs(gram - closed) > 1e-12:
        raise InternalConsistencyError(
            f"j_phi self check failed: Gram {gram!r} vs closed form {closed!r}")
    return closed


# ---------------------------------------------------------------- decompositions

def _check_group(g):
    g = np.asarray(g, dtype=float)
    if g.ndim < 2 or g.shape[-1] != g.shape[-2]:
        raise InvalidInputError(f"expected square matrices, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise InvalidInputError("group element has non-finite entries")
    if g.shape[-1] == 2:
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    else:
        det = np.linalg.det(g)
    if np.any(np.abs(det - 1.0) > 1e-8):
        raise InvalidInputError("group element is singular or not of determinant one")
    return g


def cartan_decompose(g):
    """Polar decomposition ``g = k exp(X)`` with ``k`` orthogonal and ``X`` symmetric.

    ``exp(2X) = g^T g`` is diagonalised with ``eigh`` to get a first ``k``.
    One Newton step ``k <- (k + k^{-T})/2`` removes the orthogonality loss
    caused by squaring the condition number, and ``X`` is then the log of
    the symmetric factor ``k^T g``, again through ``eigh``.
    """
    g = _check_group(g)
    if g.shape[-1] == 2:
        return _cartan_decompose_2(g)
    S = np.swapaxes(g, -1, -2) @ g
    w, V = np.linalg.eigh(S)
    if np.any(w <= 0.0) or np.any(w.min(axis=-1) < 1e-300):
        raise InvalidInputError("cartan_decompose: singular group element")
    Vt = np.swapaxes(V, -1, -2)
    Pinv = (V * (1.0 / np.sqrt(w))[..., None, :]) @ Vt
    k = g @ Pinv
    k = 0.5 * (k + np.swapaxes(np.linalg.inv(k), -1, -2))
    P = np.swapaxes(k, -1, -2) @ g
    P = 0.5 * (P + np.swapaxes(P, -1, -2))
    w, V = np.linalg.eigh(P)
    if np.any(w <= 0.0):
        raise NumericOverflowError("cartan_decompose: ill-conditioned element")
    X = (V * np.log(w)[..., None, :]) @ np.swapaxes(V, -1, -2)
    return k, X


def _cartan_decompose_2(g):
    """Closed form for 2x2, where batched ``eigh`` dominates the cost.

    ``g + cof(g)`` is a positive multiple of the rotation ``k``.  The
    symmetric factor ``P = k^T g`` has eigenvalues ``e^{+-s}``, so its
    traceless part ``B`` satisfies ``|B| = sinh s`` and ``X = s B / sinh s``.
    """
    a, b = g[..., 0, 0], g[..., 0, 1]
    c, d = g[..., 1, 0], g[..., 1, 1]
    cs, sn = a + d, c - b
    r = np.hypot(cs, sn)
    cs, sn = cs / r, sn / r
    k = np.stack([np.stack([cs, -sn], -1), np.stack([sn, cs], -1)], -2)
    P = np.swapaxes(k, -1, -2) @ g
    p = 0.5 * (P[..., 0, 0] - P[..., 1, 1])
    q = 0.5 * (P[..., 0, 1] + P[..., 1, 0])
    sh = np.hypot(p, q)
    ratio = np.ones_like(sh)
    big = sh > 1e-8
    ratio[big] = np.arcsinh(sh[big]) / sh[big]
    ratio[~big] = 1.0 - sh[~big] ** 2 / 6.0
    X = np.stack([np.stack([p, q], -1), np.stack([q, -p], -1)], -2) * ratio[..., None, None]
    return k, X


@dataclass(frozen=True, eq=False)
class IwasawaFactors:
    kappa: np.ndarray
    mu: np.ndarray
    H: np.ndarray            # matrix in a
    H_coords: np.ndarray     # coordinates in the a basis
    n_part: np.ndarray

    def reconstruct(self):
        return self.kappa @ self.mu @ mc.mat_exp(self.H) @ self.n_part


def iwasawa_decompose(g, preset):
    """``g = kappa mu exp(H) n`` via QR with a positive diagonal.

    For ``det g > 0`` the orthogonal factor of a positive-diagonal QR is
    already in ``SO(n)``, so the ``M`` component is the identity.
    """
    g = _check_group(g)
    Q, R = np.linalg.qr(g)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    if np.any(np.abs(d) < 1e-300):
        raise NumericOverflowError("iwasawa_decompose: near-singular triangular factor")
    sgn = np.sign(d)
    Q = Q * sgn[..., None, :]
    R = R * sgn[..., :, None]
    logd = np.log(np.abs(d))
    n = preset.n
    diag_mats = logd[..., :, None] * np.eye(n)
    H_coords = mc.coords(diag_mats, preset.a_basis)
    H = mc.from_coords(H_coords, preset.a_basis)
    hdiag = np.diagonal(H, axis1=-2, axis2=-1)
    n_part = np.exp(-hdiag)[..., :, None] * R
    mu = np.broadcast_to(np.eye(n), g.shape).copy()
    return IwasawaFactors(kappa=Q, mu=mu, H=H, H_coords=H_coords, n_part=n_part)


def iwasawa_H(g, preset):
    """Only the ``a`` coordinates of ``H(g)``: log of the column norms of Gram-Schmidt."""
    g = _check_group(g)
    R = np.linalg.qr(g, mode="r")
    d = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    if np.any(d < 1e-300):
        raise NumericOverflowError("iwasawa_H: near-singular triangular factor")
    return mc.coords(np.log(d)[..., :, None] * np.eye(preset.n), preset.a_basis)


def kak_decompose(g, preset=None):
    """``g = k1 exp(H) k2`` from the SVD with determinant-sign correction.

    Returns ``(k1, H, k2)`` with ``H`` diagonal and its entries decreasing.
    """
    g = _check_group(g)
    U, s, Vt = np.linalg.svd(g)
    flip = np.linalg.det(U) < 0
    U = U.copy()
    Vt = Vt.copy()
    U[..., :, -1] = np.where(flip[..., None], -U[..., :, -1], U[..., :, -1])
    Vt[..., -1, :] = np.where(flip[..., None], -Vt[..., -1, :], Vt[..., -1, :])
    if np.any(s < 1e-300):
        raise InvalidInputError("kak_decompose: singular group element")
    H = np.log(s)[..., :, None] * np.eye(g.shape[-1])
    return U, H, Vt


# ---------------------------------------------------------------- roots and measures

def root_values(H_coords, preset):
    """alpha(H) for every positive root, shape (..., r)."""
    return np.asarray(H_coords, dtype=float) @ preset.root_coeffs.T


def rho_weight(a_coords, preset):
    """exp(2 rho(a)) for ``a`` given by its a_s coordinates."""
    return np.exp(2.0 * (np.asarray(a_coords, dtype=float) @ preset.rho_coeffs))


def restricted_root_product(H_coords, preset):
    """prod over positive roots of sinh(alpha(H))^{mult}."""
    vals = np.sinh(root_values(H_coords, preset))
    return np.prod(vals ** preset.root_mults, axis=-1)


def sphere_volume(k):
    """Surface measure of the unit sphere S^k."""
    return 2.0 * math.pi ** ((k + 1) / 2.0) / math.gamma((k + 1) / 2.0)


def riemannian_volume_K(preset):
    """Volume of K = SO(n) for the metric induced by the trace form."""
    vol = math.sqrt(2.0) ** preset.dim_k
    for k in range(1, preset.n):
        vol *= sphere_volume(k)
    return vol


def iwasawa_measure_constant(preset):
    """c with dg = c e^{2 rho(H)} dk dH dY, dk the probability Haar measure.

    ``dg`` is normalised so the Cartan formula ``dg = J(X) dk dX`` holds
    exactly; ``c`` is the volume distortion of ``k + a + n`` against the
    orthonormal splitting ``k + p`` at the identity.
    """
    B = np.concatenate([preset.k_basis, preset.a_basis, preset.n_basis])
    C = np.concatenate([mc.coords(B, preset.k_basis), mc.coords(B, preset.p_basis)], axis=1)
    return abs(float(np.linalg.det(C)))


def kak_measure_constant(preset):
    """c with dg = c prod sinh(alpha(H))^m dk1 dH dk2 over the open positive chamber."""
    return riemannian_volume_K(preset) / preset.M.shape[0]


# ---------------------------------------------------------------- finite M helpers

def in_M(x, preset, tol=1e-10):
    return any(np.abs(x - m).max() <= tol for m in preset.M)


def quotient_representatives(elements, x, tol=1e-10):
    """Coset representatives of ``G / Z_G(x)`` for a finite group ``elements``."""
    elements = np.asarray(elements)
    central = [np.abs(m @ x - x @ m).max() <= tol for m in elements]
    Z = elements[np.array(central)]
    reps, seen = [], []
    for h in elements:
        coset = h @ Z
        key = min(tuple(np.round(c, 8).ravel()) for c in coset)
        if key not in seen:
            seen.append(key)
            reps.append(h)
    return np.array(reps)
