"""Pointwise algebra of small symmetric and general matrices.

Every function accepts a single ``(d, d)`` matrix or a batch ``(..., d, d)``
and works on the trailing two axes, so the same kernels serve single
matrices in unit tests and whole grid fields in the solvers.

Symmetric matrix functions are evaluated in the eigenbasis.  For ``d = 2``
the eigendecomposition is in closed form (rotation angle from ``atan2``),
which is exact for diagonal input and keeps equilibrium states bit-stable.
For ``d = 3`` LAPACK's ``eigh`` is used.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInvariants, NotPositiveDefinite

SPD_FLOOR = 1e-12
DENOM_FLOOR = 1e-10

__all__ = [
    "SPD_FLOOR",
    "DENOM_FLOOR",
    "sym_part",
    "skw_part",
    "transpose",
    "eye_like",
    "eigh_sym",
    "sym_function",
    "min_eigenvalue",
    "is_spd",
    "require_spd",
    "spd_sqrt",
    "spd_inv",
    "trace",
    "trace_log",
    "det_cofactor",
    "frob2",
    "contract",
    "b_of_sigma",
    "f_of_sigma",
    "invariants",
    "angular_velocity_w",
    "negative_part_norm",
    "spectral_norm_sym",
]


def transpose(M):
    return np.swapaxes(M, -1, -2)


def sym_part(M):
    """Symmetric part ``(M + M^T) / 2``; the result is exactly symmetric."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + transpose(M))


def skw_part(M):
    """Skew part ``(M - M^T) / 2``; the result is exactly antisymmetric."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M - transpose(M))


def eye_like(M):
    """Identity matrices broadcast to the shape of ``M``."""
    d = M.shape[-1]
    return np.broadcast_to(np.eye(d), M.shape).copy()


def trace(M):
    return np.trace(M, axis1=-2, axis2=-1)


def frob2(M):
    """Squared Frobenius norm over the trailing two axes."""
    return np.sum(M * M, axis=(-2, -1))


def contract(A, B):
    """Double contraction ``A : B`` over the trailing two axes."""
    return np.sum(A * B, axis=(-2, -1))


def _eigh2(S):
    a = S[..., 0, 0]
    b = 0.5 * (S[..., 0, 1] + S[..., 1, 0])
    c = S[..., 1, 1]
    m = 0.5 * (a + c)
    h = 0.5 * (a - c)
    r = np.hypot(h, b)
    theta = 0.5 * np.arctan2(b, h)
    cs, sn = np.cos(theta), np.sin(theta)
    lam = np.stack([m - r, m + r], axis=-1)
    Q = np.empty(S.shape, dtype=float)
    # columns: eigenvector of the smaller eigenvalue first
    Q[..., 0, 0] = -sn
    Q[..., 1, 0] = cs
    Q[..., 0, 1] = cs
    Q[..., 1, 1] = sn
    return lam, Q


def eigh_sym(S):
    """Eigenvalues (ascending) and orthonormal eigenvectors of symmetric matrices.

    Parameters
    ----------
    S : array_like, shape (..., d, d)
        Symmetric input, ``d`` in {2, 3}.

    Returns
    -------
    lam : ndarray, shape (..., d)
    Q : ndarray, shape (..., d, d)
        Columns are eigenvectors, ``S = Q diag(lam) Q^T``.
    """
    S = np.asarray(S, dtype=float)
    d = S.shape[-1]
    if d == 2:
        return _eigh2(S)
    if d == 3:
        lam, Q = np.linalg.eigh(sym_part(S))
        return lam, Q
    raise ValueError(f"unsupported matrix dimension d={d}")


def _reassemble(lam, Q):
    out = np.einsum("...ik,...k,...jk->...ij", Q, lam, Q)
    return sym_part(out)


def sym_function(S, g):
    """Apply the scalar function ``g`` to a symmetric matrix in its eigenbasis."""
    lam, Q = eigh_sym(S)
    return _reassemble(g(lam), Q)


def min_eigenvalue(S):
    lam, _ = eigh_sym(S)
    return lam[..., 0]


def is_spd(S, floor=SPD_FLOOR):
    """Boolean (array) telling whether every eigenvalue exceeds ``floor``."""
    return min_eigenvalue(S) > floor


def require_spd(S, floor=SPD_FLOOR, what="matrix"):
    """Raise :class:`NotPositiveDefinite` unless all eigenvalues exceed ``floor``."""
    lam_min = min_eigenvalue(S)
    bad = ~(lam_min > floor)
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))
        first = tuple(int(i) for i in idx[0]) if idx.size else ()
        raise NotPositiveDefinite(
            f"{what} is not positive definite: min eigenvalue "
            f"{float(np.min(lam_min)):.3e} <= {floor:g} (first bad index {first})"
        )


def spd_sqrt(S):
    """Principal square root of SPD matrices."""
    S = np.asarray(S, dtype=float)
    require_spd(S)
    return sym_function(S, np.sqrt)


def spd_inv(S):
    """Inverse of SPD matrices, evaluated in the eigenbasis."""
    S = np.asarray(S, dtype=float)
    require_spd(S)
    return sym_function(S, np.reciprocal)


def trace_log(S):
    """``tr log S = log det S`` for SPD matrices."""
    S = np.asarray(S, dtype=float)
    require_spd(S)
    lam, _ = eigh_sym(S)
    return np.sum(np.log(lam), axis=-1)


def det_cofactor(S):
    """Determinant by cofactor expansion (d = 2 or 3)."""
    S = np.asarray(S, dtype=float)
    d = S.shape[-1]
    if d == 2:
        return S[..., 0, 0] * S[..., 1, 1] - S[..., 0, 1] * S[..., 1, 0]
    if d == 3:
        return (
            S[..., 0, 0] * (S[..., 1, 1] * S[..., 2, 2] - S[..., 1, 2] * S[..., 2, 1])
            - S[..., 0, 1] * (S[..., 1, 0] * S[..., 2, 2] - S[..., 1, 2] * S[..., 2, 0])
            + S[..., 0, 2] * (S[..., 1, 0] * S[..., 2, 1] - S[..., 1, 1] * S[..., 2, 0])
        )
    raise ValueError(f"unsupported matrix dimension d={d}")


def _positive_quadratic_root(a, p, q):
    """Positive root of ``a x^2 - p x - q = 0`` with ``a > 0``, ``q > 0``.

    Uses the cancellation-free branch for either sign of ``p``.
    """
    disc = np.sqrt(p * p + 4.0 * a * q)
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = (p + disc) / (2.0 * a)
        neg = 2.0 * q / (disc - p)
    return np.where(p >= 0.0, pos, neg)


def b_of_sigma(sigma, beta):
    """Conjugate root map ``B(sigma)`` of the regularized Oldroyd-B energy.

    Returns the SPD solution of
    ``beta B^2 - (sigma - (1 - 2 beta) I) B - (1 - beta) I = 0``.
    The solution commutes with ``sigma`` and is computed eigenvalue-wise.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    sigma = np.asarray(sigma, dtype=float)
    lam, Q = eigh_sym(sigma)
    p = lam - (1.0 - 2.0 * beta)
    roots = _positive_quadratic_root(beta, p, 1.0 - beta)
    return _reassemble(roots, Q)


def f_of_sigma(sigma):
    """Conjugate root map ``F(sigma) = sigma/2 + sqrt(sigma^2/4 + I)``.

    The result is SPD and satisfies ``F - F^{-1} = sigma``.
    """
    sigma = np.asarray(sigma, dtype=float)
    lam, Q = eigh_sym(sigma)
    roots = _positive_quadratic_root(1.0, lam, 1.0)
    return _reassemble(roots, Q)


def invariants(S):
    """Principal invariants of a symmetric matrix.

    For ``d = 3`` returns ``(I, II, III)`` with ``II = (tr^2 S - tr S^2)/2``
    and ``III = det S``.  For ``d = 2`` returns ``(tr S, det S)``.
    """
    S = np.asarray(S, dtype=float)
    d = S.shape[-1]
    tr = trace(S)
    if d == 2:
        return tr, det_cofactor(S)
    if d == 3:
        II = 0.5 * (tr * tr - trace(S @ S))
        return tr, II, det_cofactor(S)
    raise ValueError(f"unsupported matrix dimension d={d}")


def angular_velocity_w(S, L, a, b, denom_floor=DENOM_FLOOR):
    """Solve ``S W + W S = H`` for the skew tensor ``W``.

    ``H = a (L S - S L^T) + b (L^T S - S L)`` is skew for symmetric ``S``.

    In three dimensions ``W = f(S) H - g(S) (S^2 H + H S^2)`` with
    ``f = (I^2 - II) / (I II - III)`` and ``g = 1 / (I II - III)``.

    In two dimensions every skew matrix is a multiple of
    ``J = [[0, 1], [-1, 0]]`` and ``S J + J S = tr(S) J`` for symmetric
    ``S``, so the equation collapses to one scalar equation and
    ``W = H / tr(S)``.  Here ``tr S`` plays the role of the denominator.

    Raises
    ------
    DegenerateInvariants
        If the denominator is at or below ``denom_floor``.
    """
    S = np.asarray(S, dtype=float)
    L = np.asarray(L, dtype=float)
    d = S.shape[-1]
    Lt = transpose(L)
    H = a * (L @ S - S @ Lt) + b * (Lt @ S - S @ L)
    H = skw_part(H)
    if d == 2:
        den = trace(S)
        if np.any(~(den > denom_floor)):
            raise DegenerateInvariants(
                f"tr S = {float(np.min(den)):.3e} <= {denom_floor:g}")
        W = H / den[..., None, None]
        return skw_part(W)
    if d == 3:
        I1, I2, I3 = invariants(S)
        den = I1 * I2 - I3
        if np.any(~(den > denom_floor)):
            raise DegenerateInvariants(
                f"I*II - III = {float(np.min(den)):.3e} <= {denom_floor:g}")
        f = (I1 * I1 - I2) / den
        g = 1.0 / den
        S2 = S @ S
        W = f[..., None, None] * H - g[..., None, None] * (S2 @ H + H @ S2)
        return skw_part(W)
    raise ValueError(f"unsupported matrix dimension d={d}")


def negative_part_norm(S):
    """Magnitude of the most negative eigenvalue, zero if ``S`` is PSD."""
    lam, _ = eigh_sym(S)
    return np.maximum(-lam[..., 0], 0.0)


def spectral_norm_sym(S):
    """Largest eigenvalue magnitude of symmetric matrices."""
    lam, _ = eigh_sym(S)
    return np.max(np.abs(lam), axis=-1)
