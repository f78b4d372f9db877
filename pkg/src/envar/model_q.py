"""Regularized Oldroyd-B model in the conformation variable ``B``.

Energy density ``(1-beta) tr(B - I - log B) + beta/2 |B - I|^2``,
dissipation potential

    mu |grad v|^2 + tr((1-beta) B (I - B^{-1})^2 + (beta + delta (1-beta)) (B - I)^2
                        + delta beta B (B - I)^2) - <f, v>,

and the operator pairing

    <A(U), Phi> = mu (grad v, grad phi) - (v (x) v - alpha S(B); grad phi) - <f, phi>
                  - (B (x) v : grad sigma) - 2 ((grad v)_skw B; sigma)
                  - alpha ((grad v)_sym B; sigma) + (B - I + delta (B^2 - B), sigma)

with ``S(B) = (1-beta)(B - I) + beta (B^2 - B)``.  The rotation term carries
the factor 2, which is what the upper-convected transport of ``B`` requires.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc
from ._roots import larger_root
from .errors import SpdLost
from .model_api import Model

__all__ = ["ParamsQ", "ModelQ"]


@dataclass(frozen=True)
class ParamsQ:
    mu: float
    alpha: float
    beta: float
    delta: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if self.alpha == 0:
            raise ValueError("alpha must be nonzero")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")


class ModelQ(Model):
    """Regularized Oldroyd-B system with SPD conformation tensor."""

    name = "model_q"
    conf_kind = "sym"

    def __init__(self, grid, params: ParamsQ, forcing=None, include_relaxation_weight=True):
        super().__init__(grid, params, forcing)
        self.include_relaxation_weight = include_relaxation_weight

    # --------------------------------------------------------- energy
    def conf_in_domain(self, C):
        return bool(np.all(np.isfinite(C)) and np.all(tc.is_spd(C)))

    def conf_energy_density(self, C):
        b = self.params.beta
        lam, _ = tc.eigh_sym(C)
        per = (1 - b) * (lam - 1.0 - np.log(lam)) + 0.5 * b * (lam - 1.0) ** 2
        return np.sum(per, axis=-1)

    def conf_dissipation_density(self, C):
        b, dl = self.params.beta, self.params.delta
        lam, _ = tc.eigh_sym(C)
        x2 = (lam - 1.0) ** 2
        per = (1 - b) * x2 / lam + (b + dl * (1 - b)) * x2 + dl * b * lam * x2
        return np.sum(per, axis=-1)

    def conf_subdiff(self, C):
        b = self.params.beta
        return tc.sym_function(C, lambda lam: (1 - b) * (1.0 - 1.0 / lam) + b * (lam - 1.0))

    def conf_subdiff_conj(self, sigma):
        return tc.b_of_sigma(sigma, self.params.beta)

    def conf_hessian(self, C, G):
        b = self.params.beta
        Binv = tc.spd_inv(C)
        return tc.sym_part((1 - b) * Binv @ G @ Binv + b * G)

    # ------------------------------------------------------- operator
    def s_of_b(self, C):
        b = self.params.beta
        X = C - np.eye(2)
        return tc.sym_part((1 - b) * X + b * (C @ C - C))

    def stress(self, C):
        return self.params.alpha * self.s_of_b(C)

    def _stretch_matrix(self, gradv, C):
        W = tc.skw_part(gradv)
        D = tc.sym_part(gradv)
        return 2.0 * W @ C + self.params.alpha * D @ C

    def stretching(self, gradv, C):
        return -tc.sym_part(self._stretch_matrix(gradv, C))

    def stretching_pairing(self, gradv, C, sigma):
        return -tc.contract(self._stretch_matrix(gradv, C), sigma)

    def relaxation(self, C):
        X = C - np.eye(2)
        return tc.sym_part((1.0 + self.params.delta) * X + self.params.delta * X @ X)

    def relaxation_solve(self, rhs, tau):
        dl = self.params.delta
        lam, Q = tc.eigh_sym(rhs - np.eye(2))
        x = larger_root(tau * dl, 1.0 + tau * (1.0 + dl), lam)
        bad = ~(1.0 + x > tc.SPD_FLOOR)
        if np.any(bad):
            node = tuple(int(i) for i in np.argwhere(np.any(bad, axis=-1))[0])
            raise SpdLost(f"{self.name}: implicit relaxation has no SPD solution", node=node)
        X = tc.sym_part(np.einsum("...ik,...k,...jk->...ij", Q, x, Q))
        return np.eye(2) + X

    # ------------------------------------------------------------- K
    def reg_weight_k(self, phi):
        p = self.params
        nr = self.norms_for_k(phi)
        C = self.grid.sobolev_constant
        a = abs(p.alpha)
        k = (2.0 * max(1.0, a) * nr["sym_grad_phi_neg_inf"]
             + C * C / (p.beta * p.mu) * nr["grad_sigma_l3"] ** 2
             + (2.0 + a) ** 2 / (4.0 * p.mu * p.beta) * nr["sigma_inf"] ** 2
             + 2.0 * max(-(p.beta + p.delta - 3.0 * p.delta * p.beta), 0.0) / p.beta)
        if self.include_relaxation_weight:
            k += 2.0 * p.delta / p.beta * nr["sigma_pos_inf"]
        return float(k)

    # ------------------------------------------- convexity map (proof)
    def relaxation_convex_map(self, C):
        """Pointwise map whose convexity carries the relaxation part of the proof.

        ``(1-beta) tr B^{-1} + (1 - beta - 3 delta beta) tr B
        + (beta + delta - 3 delta beta) |B - I|^2 + delta beta tr B^3
        + (beta + delta - 3 delta beta)_- |B - I|^2`` (constants dropped).
        """
        b, dl = self.params.beta, self.params.delta
        lam, _ = tc.eigh_sym(C)
        c = b + dl - 3.0 * dl * b
        per = ((1 - b) / lam + (1 - b - 3 * dl * b) * lam + c * (lam - 1.0) ** 2
               + dl * b * lam ** 3 + max(-c, 0.0) * (lam - 1.0) ** 2)
        return np.sum(per, axis=-1)
