"""Symmetrized Neo-Hookean model with SPD deformation field ``F``.

Energy density ``1/2 (|F|^2 - |I|^2 - log det F^2)``, dissipation
``mu |grad v|^2 - <f, v> + (1/mu_p) |F - F^{-1}|^2`` and

    <A(U), Phi> = mu (grad v, grad phi) - (v (x) v - alpha F^2; grad phi) - <f, phi>
                  - (F (x) v : grad sigma) - 2 ((grad v)_skw F; sigma)
                  - alpha ((grad v)_sym F; sigma) + (1/mu_p) (F - F^{-1}, sigma).

The constant ``-I`` in the elastic stress ``F^2 - I`` has zero divergence
and is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc
from ._roots import larger_root
from .errors import SpdLost
from .model_api import Model

__all__ = ["ParamsS", "ModelS"]


@dataclass(frozen=True)
class ParamsS:
    mu: float
    alpha: float
    mu_p: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if self.alpha == 0:
            raise ValueError("alpha must be nonzero")
        if not self.mu_p > 0:
            raise ValueError(f"mu_p must be > 0, got {self.mu_p}")


class ModelS(Model):
    """Symmetrized Neo-Hookean viscoelastic system."""

    name = "model_s"
    conf_kind = "sym"

    def conf_in_domain(self, C):
        return bool(np.all(np.isfinite(C)) and np.all(tc.is_spd(C)))

    def conf_energy_density(self, C):
        lam, _ = tc.eigh_sym(C)
        # log det F^2 = 2 tr log F
        return 0.5 * np.sum(lam * lam - 1.0 - 2.0 * np.log(lam), axis=-1)

    def conf_dissipation_density(self, C):
        lam, _ = tc.eigh_sym(C)
        return np.sum((lam - 1.0 / lam) ** 2, axis=-1) / self.params.mu_p

    def conf_subdiff(self, C):
        return tc.sym_function(C, lambda lam: lam - 1.0 / lam)

    def conf_subdiff_conj(self, sigma):
        return tc.f_of_sigma(sigma)

    def conf_hessian(self, C, G):
        Finv = tc.spd_inv(C)
        return tc.sym_part(G + Finv @ G @ Finv)

    def stress(self, C):
        return self.params.alpha * tc.sym_part(C @ C)

    def _stretch_matrix(self, gradv, C):
        W = tc.skw_part(gradv)
        D = tc.sym_part(gradv)
        return 2.0 * W @ C + self.params.alpha * D @ C

    def stretching(self, gradv, C):
        return -tc.sym_part(self._stretch_matrix(gradv, C))

    def stretching_pairing(self, gradv, C, sigma):
        return -tc.contract(self._stretch_matrix(gradv, C), sigma)

    def relaxation(self, C):
        return tc.sym_function(C, lambda lam: lam - 1.0 / lam) / self.params.mu_p

    def relaxation_solve(self, rhs, tau):
        c = tau / self.params.mu_p
        lam, Q = tc.eigh_sym(rhs)
        # lambda = 1 + y with (1+c) y^2 + (1 + 2c - rho) y - rho = 0, rho = r - 1
        rho = lam - 1.0
        y = larger_root(1.0 + c, 1.0 + 2.0 * c - rho, rho)
        if np.any(~(1.0 + y > tc.SPD_FLOOR)):
            raise SpdLost(f"{self.name}: implicit relaxation has no SPD solution")
        Y = tc.sym_part(np.einsum("...ik,...k,...jk->...ij", Q, y, Q))
        return np.eye(2) + Y

    def reg_weight_k(self, phi):
        p = self.params
        nr = self.norms_for_k(phi)
        C = self.grid.sobolev_constant
        a = abs(p.alpha)
        return float(2.0 * max(1.0, a) * nr["sym_grad_phi_inf"]
                     + (2.0 + a) ** 2 / (4.0 * p.mu) * nr["sigma_inf"] ** 2
                     + nr["sigma_neg_inf"] ** 2 / p.mu_p
                     + C * C / p.mu * nr["grad_sigma_l3"] ** 2)

    def relaxation_convex_map(self, C, sigma):
        """``tr F^{-2} + tr(F^{-1} sigma) - ||sigma_-||^2 ln det F`` nodewise."""
        Finv = tc.spd_inv(C)
        neg = tc.negative_part_norm(sigma)
        return (tc.trace(Finv @ Finv) + tc.trace(Finv @ sigma)
                - neg ** 2 * tc.trace_log(C))
