"""Quadratic viscoelastic model with a general deformation field ``F``.

Energy ``1/2 ||v||^2 + 1/2 ||F||^2``, dissipation ``mu ||grad v||^2 - <f, v>``
and the transport ``d_t F + (v . grad) F - grad v F = 0`` coupled to the
momentum balance through the stress ``F F^T``:

    <A(U), Phi> = mu (grad v, grad phi) - (v (x) v - F F^T; grad phi) - <f, phi>
                  - (F (x) v : grad sigma) - (grad v F, sigma).

The energy is quadratic, so ``DE`` and ``DE*`` are the identity.  ``F`` is
kept in the 2/3 band like the velocity; every cubic integrand is then
integrated exactly by the rectangle rule and the discrete energy balance
holds to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model_api import Model

__all__ = ["ParamsLLZ", "ModelLLZ"]


@dataclass(frozen=True)
class ParamsLLZ:
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")


class ModelLLZ(Model):
    name = "model_llz"
    conf_kind = "matrix"
    conf_band_limited = True

    def conf_minimizer(self):
        n = self.grid.n
        return np.zeros((n, n, 2, 2))

    def conf_in_domain(self, C):
        return bool(np.all(np.isfinite(C)))

    def conf_energy_density(self, C):
        return 0.5 * np.sum(C * C, axis=(-2, -1))

    def conf_dissipation_density(self, C):
        return np.zeros(C.shape[:2])

    def conf_subdiff(self, C):
        return np.array(C, dtype=float, copy=True)

    def conf_subdiff_conj(self, sigma):
        return np.array(sigma, dtype=float, copy=True)

    def conf_hessian(self, C, G):
        return np.array(G, dtype=float, copy=True)

    def stress(self, C):
        return C @ np.swapaxes(C, -1, -2)

    def stretching(self, gradv, C):
        return -(gradv @ C)

    def stretching_pairing(self, gradv, C, sigma):
        return -np.sum((gradv @ C) * sigma, axis=(-2, -1))

    def relaxation(self, C):
        return np.zeros_like(C)

    def relaxation_solve(self, rhs, tau):
        return rhs

    @property
    def k1_constant(self):
        """Constant of the weight ``K_1``: ``max(C_S^2, 1) / mu``."""
        cs = self.grid.sobolev_constant
        return max(cs * cs, 1.0) / self.params.mu

    def reg_weight_k(self, phi):
        nr = self.norms_for_k(phi)
        return float(2.0 * nr["grad_phi_inf"]
                     + self.k1_constant * (nr["grad_sigma_l3"] ** 2 + nr["sigma_inf"] ** 2))
