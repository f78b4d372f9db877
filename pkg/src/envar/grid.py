"""Periodic two-dimensional grid with Fourier spectral calculus.

Fields are plain ``numpy`` arrays whose first two axes index the grid
nodes ``x_i = i L / n`` (axis 0) and ``y_j = j L / n`` (axis 1):

===========  =====================
kind         shape
===========  =====================
scalar       ``(n, n)``
vector       ``(n, n, 2)``
matrix       ``(n, n, 2, 2)``
===========  =====================

Symmetric matrix fields use the full ``2 x 2`` layout in memory (exactly
symmetric by construction).  The packed ``(xx, xy, yy)`` layout is used at
the file boundary only, see :mod:`envar.snapshot`.

Derivatives multiply Fourier coefficients by ``i k``.  The Nyquist
wavenumber gets a zero symbol, which makes the discrete derivative exactly
skew-adjoint for the rectangle-rule inner product.  Discrete integration by
parts therefore holds to roundoff for *all* grid functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatch
from . import tensor_core as tc

__all__ = ["GridSpec", "TestFunction", "random_smooth_field"]

_KINDS = ("scalar", "vector", "sym", "spd", "matrix")


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[0, L)^2`` with ``n`` points per axis."""

    n: int
    L: float = 1.0

    d = 2

    def __post_init__(self):
        n = int(self.n)
        if n < 8 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "L", float(self.L))

    # ------------------------------------------------------------------ basics
    @property
    def h(self):
        return self.L / self.n

    @property
    def area(self):
        return self.L * self.L

    @property
    def cell(self):
        """Quadrature weight of one node."""
        return self.h * self.h

    @cached_property
    def coords(self):
        """Node coordinates ``(X, Y)`` each of shape ``(n, n)``."""
        x = np.arange(self.n) * self.h
        return np.meshgrid(x, x, indexing="ij")

    @cached_property
    def _int_modes(self):
        n = self.n
        mx = np.fft.fftfreq(n, 1.0 / n)[:, None] * np.ones((1, n // 2 + 1))
        my = np.fft.rfftfreq(n, 1.0 / n)[None, :] * np.ones((n, 1))
        return mx, my

    @cached_property
    def wavenumbers(self):
        """Angular wavenumbers ``(kx, ky)`` on the half-spectrum, shape ``(n, n//2+1)``."""
        mx, my = self._int_modes
        c = 2.0 * np.pi / self.L
        return c * mx, c * my

    @cached_property
    def _deriv_symbols(self):
        mx, my = self._int_modes
        kx, ky = self.wavenumbers
        nyq = self.n // 2
        dx = np.where(np.abs(mx) == nyq, 0.0, kx) * 1j
        dy = np.where(np.abs(my) == nyq, 0.0, ky) * 1j
        return dx, dy

    @cached_property
    def k2(self):
        """``|k|^2`` consistent with ``div(grad)`` (Nyquist symbols zeroed)."""
        dx, dy = self._deriv_symbols
        return -(dx * dx + dy * dy).real

    @cached_property
    def band_mask(self):
        """Modes kept by the 2/3 rule: ``|k_x|, |k_y| < n/3``."""
        mx, my = self._int_modes
        cut = self.n / 3.0
        return (np.abs(mx) < cut) & (np.abs(my) < cut)

    @cached_property
    def velocity_mask(self):
        """Band modes without the mean (the discrete velocity space)."""
        m = self.band_mask.copy()
        m[0, 0] = False
        return m

    # ---------------------------------------------------------------- checking
    def check(self, *fields):
        for f in fields:
            f = np.asarray(f)
            if f.ndim < 2 or f.shape[0] != self.n or f.shape[1] != self.n:
                raise GridMismatch(
                    f"field of shape {f.shape} does not live on an {self.n}x{self.n} grid")

    # -------------------------------------------------------------- transforms
    def fft(self, f):
        return np.fft.rfft2(f, axes=(0, 1))

    def ifft(self, F):
        return np.fft.irfft2(F, s=(self.n, self.n), axes=(0, 1))

    @staticmethod
    def _b(sym, ndim):
        return sym.reshape(sym.shape + (1,) * (ndim - 2))

    def _apply(self, f, symbol):
        f = np.asarray(f, dtype=float)
        self.check(f)
        return self.ifft(self.fft(f) * self._b(symbol, f.ndim))

    # --------------------------------------------------------------- calculus
    def grad(self, f):
        """Gradient; a trailing axis of length 2 holding ``d/dx, d/dy`` is appended.

        For a vector field this gives ``(grad v)[..., a, b] = d v_a / d x_b``.
        """
        f = np.asarray(f, dtype=float)
        self.check(f)
        F = self.fft(f)
        dx, dy = self._deriv_symbols
        gx = self.ifft(F * self._b(dx, f.ndim))
        gy = self.ifft(F * self._b(dy, f.ndim))
        return np.stack([gx, gy], axis=-1)

    def partial(self, f, axis):
        dx, dy = self._deriv_symbols
        return self._apply(f, dx if axis == 0 else dy)

    def div(self, v):
        """Divergence of a vector field."""
        v = np.asarray(v, dtype=float)
        self.check(v)
        return self.partial(v[..., 0], 0) + self.partial(v[..., 1], 1)

    def div_mat(self, T):
        """Row-wise divergence ``(div T)_a = sum_b d T_ab / d x_b``."""
        T = np.asarray(T, dtype=float)
        self.check(T)
        return self.partial(T[..., 0], 0) + self.partial(T[..., 1], 1)

    def laplacian(self, f):
        return self._apply(f, -self.k2)

    # ------------------------------------------------------------ projections
    def leray_project(self, v):
        """Orthogonal projection onto mean-free solenoidal fields.

        The mean mode and the Nyquist modes (whose divergence is not
        represented by the derivative symbols) are removed as well.
        """
        v = np.asarray(v, dtype=float)
        self.check(v)
        V = self.fft(v)
        dx, dy = self._deriv_symbols
        k2 = self.k2
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(k2 > 0, 1.0 / k2, 0.0)
        # i k (i k . V) / |k|^2 with i k = (dx, dy): the gradient part is
        # -(dx * (dx Vx + dy Vy)) / k2 since (i k)^2 = -k^2.
        divV = dx * V[..., 0] + dy * V[..., 1]
        out = np.empty_like(V)
        out[..., 0] = V[..., 0] + dx * divV * inv
        out[..., 1] = V[..., 1] + dy * divV * inv
        keep = k2 > 0
        out *= keep[..., None]
        return self.ifft(out)

    def dealias(self, f):
        """Truncate to the 2/3-rule band."""
        return self._apply(f, self.band_mask.astype(float))

    def project_velocity(self, v):
        """Projection onto the discrete velocity space (band-limited, solenoidal)."""
        v = np.asarray(v, dtype=float)
        self.check(v)
        return self.dealias(self.leray_project(v))

    def solve_helmholtz(self, rhs, a, b):
        """Solve ``a u - b lap(u) = rhs`` spectrally (``a > 0``, ``b >= 0``)."""
        return self._apply(rhs, 1.0 / (a + b * self.k2))

    # ------------------------------------------------------------- quadrature
    def integrate(self, f):
        """Rectangle rule ``(L/n)^2 * sum`` over the leading two axes."""
        f = np.asarray(f, dtype=float)
        self.check(f)
        return self.cell * np.sum(f, axis=(0, 1))

    def inner(self, a, b):
        """L2 inner product summing over all component axes."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        self.check(a, b)
        return self.cell * float(np.sum(a * b))

    def norm_l2(self, f):
        return np.sqrt(self.inner(f, f))

    def norm_lp(self, pointwise_abs, p):
        """``(int |g|^p)^(1/p)`` given the pointwise magnitude ``|g|``."""
        return float(self.integrate(np.asarray(pointwise_abs) ** p)) ** (1.0 / p)

    # ------------------------------------------------------ embedding constant
    @cached_property
    def sobolev_constant(self):
        """Upper bound ``C`` with ``||v||_{L^6} <= C ||grad v||_{L^2}`` on the velocity space.

        For ``v = sum_k c_k e^{i k.x}``, Cauchy-Schwarz gives
        ``max|v| <= sqrt(sum 1/|k|^2) * ||grad v|| / |Omega|^{1/2}`` and
        ``||v||_6 <= |Omega|^{1/6} max|v|``.  The sum runs over the full
        (two-sided) set of retained nonzero modes.
        """
        k2 = self.k2
        mask = self.velocity_mask
        weights = np.full(k2.shape, 2.0)
        weights[:, 0] = 1.0
        if self.n % 2 == 0:
            weights[:, -1] = 1.0
        s = float(np.sum(weights[mask] / k2[mask]))
        return self.area ** (-1.0 / 3.0) * np.sqrt(s)

    def sobolev_constant_estimate(self, iters=200, seed=0):
        """Power-iteration estimate (a lower bound) of the best embedding constant."""
        v = random_smooth_field(self, seed, k_max=max(1, self.n // 8), kind="vector")
        v = self.project_velocity(v)
        ratio = 0.0
        for _ in range(iters):
            mag2 = np.sum(v * v, axis=-1)
            rhs = self.project_velocity(mag2[..., None] ** 2 * v)
            R = self.fft(rhs)
            k2 = self.k2
            with np.errstate(divide="ignore", invalid="ignore"):
                R = np.where(self._b(k2 > 0, 3), R / self._b(np.where(k2 > 0, k2, 1.0), 3), 0.0)
            v = self.ifft(R)
            gnorm = self.norm_l2(self.grad(v))
            v = v / gnorm
            l6 = self.norm_lp(np.sqrt(np.sum(v * v, axis=-1)), 6)
            ratio = l6
        return ratio


# ---------------------------------------------------------------- test data
def _band_polynomial(n, coefs, k_max):
    """Sample the real trigonometric polynomial with the given band coefficients.

    ``coefs[kx + k_max, ky]`` multiplies ``exp(2 pi i (kx x + ky y) / L)``; the
    real part is taken.  The samples do not depend on ``n`` beyond the
    sampling itself.
    """
    spec = np.zeros((n, n // 2 + 1), dtype=complex)
    kx = np.arange(-k_max, k_max + 1) % n
    spec[kx, : k_max + 1] = coefs
    return np.fft.irfft2(spec, s=(n, n)) * (n * n)


def random_smooth_field(grid, seed, k_max, kind="scalar", amplitude=1.0):
    """Deterministic band-limited random field.

    The field is a trigonometric polynomial with integer wavenumbers
    ``|k_x|, |k_y| <= k_max``.  Its coefficients are drawn in a fixed order,
    so a given seed describes the same continuous field on every grid, which
    is what refinement studies need.

    Parameters
    ----------
    grid : GridSpec
    seed : int
        Seed of a PCG64 generator; equal seeds give bit-identical fields.
    k_max : int
        Largest integer wavenumber per axis; must satisfy ``k_max < n/3``.
    kind : {"scalar", "vector", "sym", "spd", "matrix"}
        ``"spd"`` returns ``I + P`` with a symmetric perturbation scaled so that
        the smallest eigenvalue is at least 0.1.
    amplitude : float
        Maximum absolute value of the (perturbation) field, measured on a
        fixed reference grid.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {_KINDS}")
    if not 0 <= k_max < grid.n / 3:
        raise ValueError(f"k_max={k_max} must satisfy 0 <= k_max < n/3 = {grid.n / 3:.2f}")
    rng = np.random.Generator(np.random.PCG64(seed))
    ncomp = {"scalar": 1, "vector": 2, "sym": 3, "spd": 3, "matrix": 4}[kind]
    n = grid.n
    n_ref = max(128, 1 << int(np.ceil(np.log2(8 * (k_max + 1)))))
    kx = np.arange(-k_max, k_max + 1)[:, None]
    ky = np.arange(0, k_max + 1)[None, :]
    decay = 1.0 / (1.0 + kx**2 + ky**2)
    coefs = []
    for _ in range(ncomp):
        shape = (2 * k_max + 1, k_max + 1)
        c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        c[k_max, 0] = 0.0 if k_max > 0 else c[k_max, 0]
        coefs.append(c * decay)

    def sample(m):
        return np.stack([_band_polynomial(m, c, k_max) for c in coefs], axis=-1)

    ref = sample(n_ref)
    comps = sample(n)
    scale = np.max(np.abs(ref))
    if scale > 0:
        comps = comps * (amplitude / scale)
        ref = ref * (amplitude / scale)
    if kind == "scalar":
        return comps[..., 0]
    if kind == "vector":
        return comps
    if kind == "matrix":
        return comps.reshape(n, n, 2, 2)

    def as_sym(c):
        m = c.shape[0]
        P = np.empty((m, m, 2, 2))
        P[..., 0, 0] = c[..., 0]
        P[..., 0, 1] = P[..., 1, 0] = c[..., 1]
        P[..., 1, 1] = c[..., 2]
        return P

    P = as_sym(comps)
    if kind == "sym":
        return P
    # the fine reference grid resolves the minimum of the smooth eigenvalue
    # field; a margin of 0.05 keeps every coarser sampling above 0.1
    lo = float(np.min(tc.min_eigenvalue(as_sym(ref))))
    if 1.0 + lo < 0.15:
        P = P * (0.85 / -lo)
    lo_here = float(np.min(tc.min_eigenvalue(P)))
    if 1.0 + lo_here < 0.1:  # pragma: no cover - guarded by the margin above
        P = P * (0.9 / -lo_here)
    return np.eye(2) + P


# ------------------------------------------------------------- test functions
@dataclass(frozen=True)
class TestFunction:
    """Test function ``Phi(t) = c(t) * (phi, sigma)``.

    ``coeff`` and ``dcoeff`` are optional callables of time; without them the
    test function is constant in time.  ``phi`` must lie in the discrete
    velocity space (band-limited, solenoidal); ``sigma`` is a matrix field.
    """

    __test__ = False  # keep pytest from collecting this class

    phi: np.ndarray
    sigma: np.ndarray
    coeff: object = None
    dcoeff: object = None
    label: str = ""

    def c(self, t):
        return 1.0 if self.coeff is None else float(self.coeff(t))

    def dc(self, t):
        return 0.0 if self.dcoeff is None else float(self.dcoeff(t))

    def at(self, t):
        """Spatial test function ``(phi, sigma)`` at time ``t``."""
        c = self.c(t)
        return TestFunction(c * self.phi, c * self.sigma, label=self.label)

    def scaled(self, lam):
        return TestFunction(lam * self.phi, lam * self.sigma, self.coeff, self.dcoeff, self.label)

    @property
    def is_time_dependent(self):
        return self.coeff is not None
