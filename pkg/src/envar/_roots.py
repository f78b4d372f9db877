"""Scalar root helper shared by the nodewise implicit relaxation solves."""

import numpy as np


def larger_root(a, b, rho):
    """Larger root of ``a y^2 + b y - rho = 0`` (``a >= 0``), cancellation free.

    Returns ``nan`` where the roots are complex.  For ``a = 0`` the linear
    solution ``rho / b`` is returned.  ``rho = 0`` with ``b > 0`` gives an
    exact zero, which keeps equilibrium states bit-stable.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    rho = np.asarray(rho, dtype=float)
    disc = b * b + 4.0 * a * rho
    with np.errstate(invalid="ignore", divide="ignore"):
        sq = np.sqrt(disc)
        pos_b = 2.0 * rho / (b + sq)
        neg_b = (-b + sq) / (2.0 * a)
    return np.where(disc < 0, np.nan, np.where(b > 0, pos_b, neg_b))
