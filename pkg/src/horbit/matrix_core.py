"""Dense small-matrix kernels.

Every function accepts a single ``(n, n)`` matrix or a stack ``(..., n, n)``
and works batch-wise.  The inner product on matrices is the trace form
``<X, Y> = tr(X^T Y)``.
"""

import numpy as np
from scipy.linalg import expm

from .errors import InvalidInputError, NumericOverflowError


def _as_square_stack(X):
    X = np.asarray(X, dtype=float)
    if X.ndim < 2 or X.shape[-1] != X.shape[-2]:
        raise InvalidInputError(f"expected square matrices, got shape {X.shape}")
    return X


def inner(X, Y):
    """Trace form tr(X^T Y), batched over leading axes."""
    return np.einsum("...ij,...ij->...", X, Y)


def coords(X, basis):
    """Coordinates of ``X`` in an orthonormal ``basis`` of shape (d, n, n)."""
    return np.einsum("...ij,bij->...b", X, basis)


def from_coords(c, basis):
    """Matrix with coordinates ``c`` in ``basis``."""
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != basis.shape[0]:
        raise InvalidInputError(
            f"coordinate length {c.shape[-1]} does not match basis size {basis.shape[0]}")
    return np.einsum("...b,bij->...ij", c, basis)


def mat_exp(X):
    """Matrix exponential of a matrix or stack, via ``scipy.linalg.expm``.

    Non-finite input and overflowing results raise instead of returning NaN.
    """
    X = _as_square_stack(X)
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("mat_exp: non-finite entries")
    R = expm(X)
    if not np.all(np.isfinite(R)):
        raise NumericOverflowError("mat_exp: result overflows double precision")
    return R


def bracket(X, Y):
    return X @ Y - Y @ X


def ad_operator(X, basis):
    """Matrix of ``Y -> [X, Y]`` in an orthonormal ``basis`` of shape (d, n, n).

    Entry ``(a, b)`` is ``<basis_a, [X, basis_b]>``; the result has shape
    ``(..., d, d)``.
    """
    X = _as_square_stack(X)
    basis = np.asarray(basis, dtype=float)
    if basis.ndim != 3 or basis.shape[1:] != X.shape[-2:]:
        raise InvalidInputError(
            f"ad_operator: basis shape {basis.shape} incompatible with X {X.shape}")
    images = bracket(X[..., None, :, :], basis)          # (..., d, n, n)
    return np.einsum("aij,...bij->...ab", basis, images)


def analytic_jacobian_J(X, p_basis, tol=1e-16):
    """``|det_p(sinh(ad_X)/ad_X)|`` for ``X`` in the -1 eigenspace ``p``.

    ``ad_X^2`` maps ``p`` to itself, so the even power series
    ``sum ad_X^{2m}/(2m+1)!`` is summed on ``p`` until the next term is
    below ``tol`` relative to the partial sum.
    """
    X = _as_square_stack(X)
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("analytic_jacobian_J: non-finite entries")
    scale = np.maximum(1.0, np.abs(X).max(axis=(-2, -1)))
    if np.any(np.abs(X - np.swapaxes(X, -1, -2)).max(axis=(-2, -1)) > 1e-10 * scale):
        raise InvalidInputError("analytic_jacobian_J: X is not in p (theta X != -X)")
    p_basis = np.asarray(p_basis, dtype=float)
    # L = ad_X^2 restricted to p, via <P_a, [X, [X, P_b]]>
    inner_br = bracket(X[..., None, :, :], p_basis)
    outer_br = bracket(X[..., None, :, :], inner_br)
    L = np.einsum("aij,...bij->...ab", p_basis, outer_br)
    d = p_basis.shape[0]
    term = np.broadcast_to(np.eye(d), L.shape).copy()
    total = term.copy()
    m = 0
    while True:
        m += 1
        term = term @ L / ((2 * m) * (2 * m + 1))
        total += term
        tn = np.abs(term).max(axis=(-2, -1))
        sn = np.abs(total).max(axis=(-2, -1))
        if np.all(tn <= tol * sn) or m > 2000:
            break
    return np.abs(np.linalg.det(total))


def adjoint_action(g, basis):
    """Matrix of ``Y -> g Y g^{-1}`` on the span of an orthonormal ``basis``.

    Only meaningful when that span is ``Ad_g``-invariant (for example
    ``p`` under ``g`` in ``K``).
    """
    g = _as_square_stack(g)
    ginv = np.linalg.inv(g)
    images = g[..., None, :, :] @ basis @ ginv[..., None, :, :]
    return np.einsum("aij,...bij->...ab", basis, images)
