"""Generic model contract and the structural checkers built on it.

A model supplies an energy ``E``, a dissipation potential ``Psi``, the
operator ``A`` through its weak pairing ``<A(t, U), Phi>``, a regularity
weight ``K(Phi)`` and the maps ``DE``, ``DE*`` and ``D^2 E``.  The velocity
part is shared by all models and lives in the discrete velocity space (the
band-limited, mean-free, solenoidal fields); each concrete model adds the
conformation part.

Besides the weak pairing every model also provides its Riesz representer
``R(U)`` with ``(R(U), Phi) = <A(U), Phi>`` for every admissible test
function.  The time stepper works with ``R``; the checkers work with the
term-by-term weak pairing, and the two routes are cross-checked in the
test suite.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor_core as tc
from .errors import OutsideDomain
from .grid import GridSpec, TestFunction, random_smooth_field

__all__ = [
    "State",
    "DualState",
    "Forcing",
    "ModeForcing",
    "CallableForcing",
    "Model",
    "CheckRecord",
    "energy",
    "dissipation",
    "subdiff_energy",
    "subdiff_conjugate",
    "hessian_apply",
    "operator_a",
    "reg_weight_k",
    "check_adiss",
    "check_convexity",
    "check_fenchel",
    "check_hessian",
    "gauss_points",
]

GAUSS_NODES = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


def gauss_points(t0, t1):
    """Two-point Gauss nodes on ``[t0, t1]`` (equal weights 1/2)."""
    return tuple(t0 + (t1 - t0) * g for g in GAUSS_NODES)


# ------------------------------------------------------------------- states
@dataclass(frozen=True)
class State:
    """Unknown ``U = (v, C)``: velocity and conformation/deformation field."""

    v: np.ndarray
    C: np.ndarray

    def __add__(self, other):
        return State(self.v + other.v, self.C + other.C)

    def __sub__(self, other):
        return State(self.v - other.v, self.C - other.C)

    def scale(self, a):
        return State(a * self.v, a * self.C)

    def max_abs(self):
        return max(float(np.max(np.abs(self.v))), float(np.max(np.abs(self.C))))

    def equals(self, other):
        return np.array_equal(self.v, other.v) and np.array_equal(self.C, other.C)


@dataclass(frozen=True)
class DualState:
    """Element ``(w, sigma)`` of the dual space, the argument of ``DE*``."""

    w: np.ndarray
    sigma: np.ndarray

    def scale(self, a):
        return DualState(a * self.w, a * self.sigma)

    def as_test_function(self):
        return TestFunction(self.w, self.sigma)

    @staticmethod
    def from_test_function(phi):
        return DualState(phi.phi, phi.sigma)


def pairing(grid, z, s):
    """``<z, s> = int w.v + int sigma : C``."""
    w, sig = (z.w, z.sigma) if isinstance(z, DualState) else (z.phi, z.sigma)
    return grid.inner(w, s.v) + grid.inner(sig, s.C)


# ------------------------------------------------------------------ forcing
class Forcing:
    """Body force ``f(t)``; the zero force by default.

    Subclasses return fields in the discrete velocity space.  The dual norm
    used for ``C_Psi`` is ``||f||_* = sup <f, v> / ||grad v||`` over that
    space, i.e. ``<P f, (-lap)^{-1} P f>^{1/2}``.
    """

    is_zero = True

    def __call__(self, grid, t):
        return np.zeros((grid.n, grid.n, 2))

    @staticmethod
    def dual_norm2(grid, f):
        Pf = grid.project_velocity(f)
        F = grid.fft(Pf)
        k2 = grid.k2
        inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
        return grid.inner(Pf, grid.ifft(F * inv[..., None]))

    def describe(self):
        return "none"


@dataclass(frozen=True)
class ForceMode:
    """One forcing mode ``amp * cos(omega t + phase) * e_k(x)``.

    ``e_k`` is the unit-amplitude solenoidal field
    ``(-k_y, k_x) / |k| * sin(2 pi (k_x x + k_y y) / L)``.
    """

    kx: int
    ky: int
    amp: float
    omega: float = 0.0
    phase: float = 0.0


class ModeForcing(Forcing):
    """Finite sum of band-limited solenoidal modes with cosine time factors."""

    is_zero = False

    def __init__(self, modes):
        self.modes = tuple(m if isinstance(m, ForceMode) else ForceMode(**m) for m in modes)
        if not self.modes:
            self.is_zero = True
        self._cache = {}

    def _shape(self, grid, m):
        key = (grid, m.kx, m.ky)
        if key not in self._cache:
            if m.kx == 0 and m.ky == 0:
                raise ValueError("forcing mode (0, 0) is not allowed (mean-free velocity space)")
            if max(abs(m.kx), abs(m.ky)) >= grid.n / 3:
                raise ValueError(f"forcing mode ({m.kx}, {m.ky}) is outside the resolved band")
            X, Y = grid.coords
            arg = 2.0 * np.pi * (m.kx * X + m.ky * Y) / grid.L
            nrm = math.hypot(m.kx, m.ky)
            e = np.stack([-m.ky / nrm * np.sin(arg), m.kx / nrm * np.sin(arg)], axis=-1)
            self._cache[key] = e
        return self._cache[key]

    def __call__(self, grid, t):
        out = np.zeros((grid.n, grid.n, 2))
        for m in self.modes:
            out += m.amp * math.cos(m.omega * t + m.phase) * self._shape(grid, m)
        return out

    def describe(self):
        return ";".join(f"({m.kx},{m.ky},{m.amp:g},{m.omega:g},{m.phase:g})" for m in self.modes)


class CallableForcing(Forcing):
    """Wrap ``fn(t) -> vector field``; the field is projected on evaluation."""

    is_zero = False

    def __init__(self, fn, label="callable"):
        self.fn = fn
        self.label = label

    def __call__(self, grid, t):
        return grid.project_velocity(self.fn(t))

    def describe(self):
        return self.label


# -------------------------------------------------------------- base model
class Model(ABC):
    """Base class: velocity part shared by all models.

    Subclasses implement the ``conf_*`` hooks for the conformation field and
    the elastic stress entering the momentum balance.
    """

    name = "abstract"
    #: "sym" for SPD-valued conformation fields, "matrix" for general matrices
    conf_kind = "sym"
    #: if True the conformation field is kept in the 2/3 band as well
    conf_band_limited = False

    def __init__(self, grid: GridSpec, params, forcing: Forcing | None = None):
        self.grid = grid
        self.params = params
        self.forcing = forcing if forcing is not None else Forcing()

    # ------------------------------------------------------- model hooks
    @property
    def mu(self):
        return self.params.mu

    def params_dict(self):
        return asdict(self.params)

    @abstractmethod
    def conf_in_domain(self, C) -> bool: ...

    @abstractmethod
    def conf_energy_density(self, C): ...

    @abstractmethod
    def conf_dissipation_density(self, C): ...

    @abstractmethod
    def conf_subdiff(self, C): ...

    @abstractmethod
    def conf_subdiff_conj(self, sigma): ...

    @abstractmethod
    def conf_hessian(self, C, G): ...

    @abstractmethod
    def stress(self, C):
        """Elastic stress ``T(C)``; the momentum balance carries ``-div T``."""

    @abstractmethod
    def stretching(self, gradv, C):
        """Strong form of the stretching terms (tested against symmetric/general sigma)."""

    @abstractmethod
    def stretching_pairing(self, gradv, C, sigma):
        """Pointwise integrand of the stretching pairing."""

    @abstractmethod
    def relaxation(self, C): ...

    @abstractmethod
    def relaxation_solve(self, rhs, tau):
        """Solve ``C + tau * relaxation(C) = rhs`` nodewise."""

    @abstractmethod
    def reg_weight_k(self, phi: TestFunction) -> float: ...

    def conf_minimizer(self):
        n = self.grid.n
        return np.broadcast_to(np.eye(2), (n, n, 2, 2)).copy()

    # --------------------------------------------------------- functionals
    def minimizer(self):
        n = self.grid.n
        return State(np.zeros((n, n, 2)), self.conf_minimizer())

    def force(self, t):
        return self.forcing(self.grid, t)

    def force_average(self, t0, t1):
        """Two-point Gauss average of ``f`` over ``[t0, t1]``."""
        if self.forcing.is_zero:
            return np.zeros((self.grid.n, self.grid.n, 2))
        ta, tb = gauss_points(t0, t1)
        return 0.5 * (self.force(ta) + self.force(tb))

    def c_psi(self, t):
        """``C_Psi(t) = ||f(t)||_*^2 / (2 mu)``."""
        if self.forcing.is_zero:
            return 0.0
        return Forcing.dual_norm2(self.grid, self.force(t)) / (2.0 * self.mu)

    def c_psi_average(self, t0, t1):
        if self.forcing.is_zero:
            return 0.0
        ta, tb = gauss_points(t0, t1)
        return 0.5 * (self.c_psi(ta) + self.c_psi(tb))

    def energy(self, s: State) -> float:
        """Total energy; ``+inf`` outside the domain."""
        if not self.conf_in_domain(s.C):
            return math.inf
        g = self.grid
        return 0.5 * g.inner(s.v, s.v) + float(g.integrate(self.conf_energy_density(s.C)))

    def dissipation_f(self, s: State, f) -> float:
        """``Psi`` with an explicit force field ``f`` (``None`` means zero)."""
        if not self.conf_in_domain(s.C):
            raise OutsideDomain(f"{self.name}: state outside the domain of the dissipation")
        g = self.grid
        gv = g.grad(s.v)
        val = self.mu * g.inner(gv, gv) + float(g.integrate(self.conf_dissipation_density(s.C)))
        if f is not None:
            val -= g.inner(f, s.v)
        return val

    def dissipation(self, t, s: State) -> float:
        f = None if self.forcing.is_zero else self.force(t)
        return self.dissipation_f(s, f)

    def subdiff_energy(self, s: State) -> DualState:
        if not self.conf_in_domain(s.C):
            raise OutsideDomain(f"{self.name}: DE undefined outside the domain")
        return DualState(s.v.copy(), self.conf_subdiff(s.C))

    def subdiff_conjugate(self, z: DualState) -> State:
        return State(z.w.copy(), self.conf_subdiff_conj(z.sigma))

    def conjugate_energy(self, z: DualState) -> float:
        """``E*(z) = <z, DE*(z)> - E(DE*(z))``."""
        s = self.subdiff_conjugate(z)
        return pairing(self.grid, z, s) - self.energy(s)

    def hessian_apply(self, s: State, d: State) -> DualState:
        return DualState(d.v.copy(), self.conf_hessian(s.C, d.C))

    # ------------------------------------------------------------ operator
    def operator_a_terms(self, s: State, phi: TestFunction, f=None) -> dict:
        """All pairing terms of ``<A(U), Phi>`` assembled by quadrature."""
        if not self.conf_in_domain(s.C):
            raise OutsideDomain(f"{self.name}: state outside the domain of A")
        g = self.grid
        v, C = s.v, s.C
        gv = g.grad(v)
        gphi = g.grad(phi.phi)
        vv = v[..., :, None] * v[..., None, :]
        terms = {
            "viscous": self.mu * g.inner(gv, gphi),
            "convective": -g.inner(vv, gphi),
            "stress": g.inner(self.stress(C), gphi),
            "forcing": 0.0 if f is None else -g.inner(f, phi.phi),
        }
        gsig = g.grad(phi.sigma)  # [..., i, j, k] = d sigma_ij / d x_k
        transport = np.einsum("...ij,...k,...ijk->...", C, v, gsig)
        terms["transport"] = -float(g.integrate(transport))
        terms["stretching"] = float(g.integrate(self.stretching_pairing(gv, C, phi.sigma)))
        terms["relaxation"] = g.inner(self.relaxation(C), phi.sigma)
        return terms

    def operator_a_f(self, s, phi, f=None):
        return float(sum(self.operator_a_terms(s, phi, f).values()))

    def operator_a(self, t, s, phi):
        f = None if self.forcing.is_zero else self.force(t)
        return self.operator_a_f(s, phi, f)

    # ---------------------------------------------------- strong form of A
    def explicit_velocity(self, s: State, f):
        """Non-stiff momentum terms ``P[div(v (x) v) - div T(C) - f]``."""
        g = self.grid
        v, C = s.v, s.C
        vv = v[..., :, None] * v[..., None, :]
        rv = g.div_mat(vv) - g.div_mat(self.stress(C))
        if f is not None:
            rv = rv - f
        return g.project_velocity(rv)

    def explicit_conf(self, s: State):
        """Transport (conservative form) plus stretching of the conformation field."""
        g = self.grid
        v, C = s.v, s.C
        gv = g.grad(v)
        flux = C[..., None] * v[..., None, None, :]  # [..., i, j, k] = C_ij v_k
        rc = g.partial(flux[..., 0], 0) + g.partial(flux[..., 1], 1)
        rc = rc + self.stretching(gv, C)
        if self.conf_kind == "sym":
            rc = tc.sym_part(rc)
        if self.conf_band_limited:
            rc = g.dealias(rc)
        return rc

    def _explicit_parts(self, s: State, f):
        return self.explicit_velocity(s, f), self.explicit_conf(s)

    def representer(self, s: State, f=None) -> State:
        """Riesz representer ``R(U)`` of the weak pairing in the discrete spaces."""
        g = self.grid
        rv, rc = self._explicit_parts(s, f)
        rv = rv - self.mu * g.laplacian(s.v)
        relax = self.relaxation(s.C)
        if self.conf_band_limited:
            relax = g.dealias(relax)
        return State(g.project_velocity(rv), rc + relax)

    def project_state(self, s: State) -> State:
        """Map a state into the discrete state space."""
        g = self.grid
        C = s.C
        if self.conf_kind == "sym":
            C = tc.sym_part(C)
        if self.conf_band_limited:
            C = g.dealias(C)
        return State(g.project_velocity(s.v), C)

    # ------------------------------------------------------- test data
    def random_state(self, rng_seed, k_max=3, v_amp=0.5, c_amp=0.5):
        """Random interior state in the discrete state space."""
        g = self.grid
        ss = np.random.SeedSequence(rng_seed)
        s1, s2 = (int(x) for x in ss.generate_state(2))
        v = g.project_velocity(random_smooth_field(g, s1, k_max, "vector", v_amp))
        if self.conf_kind == "sym":
            C = random_smooth_field(g, s2, k_max, "spd", c_amp)
        else:
            C = g.dealias(random_smooth_field(g, s2, k_max, "matrix", c_amp))
        return State(v, C)

    def random_test_function(self, rng_seed, k_max=3, phi_amp=0.5, sigma_amp=0.5):
        g = self.grid
        ss = np.random.SeedSequence(rng_seed)
        s1, s2 = (int(x) for x in ss.generate_state(2))
        phi = g.project_velocity(random_smooth_field(g, s1, k_max, "vector", phi_amp))
        kind = "sym" if self.conf_kind == "sym" else "matrix"
        sig = random_smooth_field(g, s2, k_max, kind, sigma_amp)
        return TestFunction(phi, sig)

    # ------------------------------------------------------- helpers for K
    def norms_for_k(self, phi: TestFunction) -> dict:
        """Discrete norms entering the regularity weights."""
        g = self.grid
        gphi = g.grad(phi.phi)
        D = tc.sym_part(gphi)
        sig = phi.sigma
        gs = g.grad(sig)
        gs_abs = np.sqrt(np.sum(gs * gs, axis=(-3, -2, -1)))
        if self.conf_kind == "sym":
            sig_inf = float(np.max(tc.spectral_norm_sym(sig)))
            sig_neg = float(np.max(tc.negative_part_norm(sig)))
            sig_pos = float(np.max(tc.negative_part_norm(-sig)))
        else:
            sig_inf = float(np.max(np.linalg.norm(sig, ord=2, axis=(-2, -1))))
            sig_neg = sig_pos = sig_inf
        return {
            "grad_phi_inf": float(np.max(np.linalg.norm(gphi, ord=2, axis=(-2, -1)))),
            "sym_grad_phi_inf": float(np.max(tc.spectral_norm_sym(D))),
            "sym_grad_phi_neg_inf": float(np.max(tc.negative_part_norm(D))),
            "grad_sigma_l3": g.norm_lp(gs_abs, 3),
            "sigma_inf": sig_inf,
            "sigma_neg_inf": sig_neg,
            "sigma_pos_inf": sig_pos,
        }

    def describe(self):
        p = ", ".join(f"{k}={v:g}" for k, v in self.params_dict().items())
        return f"{self.name}({p})"


# ----------------------------------------------------- functional facade
def energy(model, s):
    return model.energy(s)


def dissipation(model, t, s):
    return model.dissipation(t, s)


def subdiff_energy(model, s):
    return model.subdiff_energy(s)


def subdiff_conjugate(model, z):
    return model.subdiff_conjugate(z)


def hessian_apply(model, s, d):
    return model.hessian_apply(s, d)


def operator_a(model, t, s, phi):
    return model.operator_a(t, s, phi)


def reg_weight_k(model, phi):
    return model.reg_weight_k(phi)


# ---------------------------------------------------------------- checkers
@dataclass
class CheckRecord:
    """Structured result of one check."""

    check: str
    model: str
    params: str
    residual: float
    tolerance: float
    passed: bool
    extra: dict = field(default_factory=dict)

    def as_row(self):
        return {
            "check": self.check,
            "model": self.model,
            "params": self.params,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


def _params_str(model):
    return ";".join(f"{k}={v:g}" for k, v in model.params_dict().items())


def _map_trials(fn, trials, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, range(trials)))
    return [fn(i) for i in range(trials)]


def check_adiss(model, t, phi: TestFunction) -> float:
    """Relative residual ``|<A(t, DE*(Phi)), Phi> - Psi(t, DE*(Phi))| / (1 + |Psi|)``."""
    U = model.subdiff_conjugate(DualState(phi.phi, phi.sigma))
    a = model.operator_a(t, U, phi)
    psi = model.dissipation(t, U)
    return abs(a - psi) / (1.0 + abs(psi))


def convexity_functional(model, t, phi, s, f=None, k=None):
    """``G(s) = Psi(t, s) - <A(t, s), Phi> + K(Phi) E(s)``."""
    if f is None and not model.forcing.is_zero:
        f = model.force(t)
    if k is None:
        k = model.reg_weight_k(phi)
    return model.dissipation_f(s, f) - model.operator_a_f(s, phi, f) + k * model.energy(s)


def check_convexity(model, t, phi, trials=1000, seed=0, tol=1e-9, threads=None,
                    state_sampler=None):
    """Midpoint test of the convexity hypothesis.

    Samples pairs of admissible states and returns the worst value of
    ``(G(mid) - (G(s1) + G(s2)) / 2) / max(|G(s1)|, |G(s2)|, 1)``.  When
    ``phi`` is ``None`` each trial draws its own random test function.
    """
    f = None if model.forcing.is_zero else model.force(t)
    k_fixed = None if phi is None else model.reg_weight_k(phi)

    def one(i):
        seeds = np.random.SeedSequence([seed, i]).generate_state(4)
        rng = np.random.Generator(np.random.PCG64(int(seeds[3])))
        p = phi if phi is not None else model.random_test_function(
            int(seeds[2]), phi_amp=float(rng.uniform(0.1, 2.0)),
            sigma_amp=float(rng.uniform(0.1, 2.0)))
        k = k_fixed if phi is not None else model.reg_weight_k(p)
        if state_sampler is not None:
            s1, s2 = state_sampler(model, rng)
        else:
            s1 = model.random_state(int(seeds[0]), v_amp=float(rng.uniform(0.05, 2.0)),
                                    c_amp=float(rng.uniform(0.05, 1.0)))
            s2 = model.random_state(int(seeds[1]), v_amp=float(rng.uniform(0.05, 2.0)),
                                    c_amp=float(rng.uniform(0.05, 1.0)))
        mid = State(0.5 * (s1.v + s2.v), 0.5 * (s1.C + s2.C))
        g1 = convexity_functional(model, t, p, s1, f, k)
        g2 = convexity_functional(model, t, p, s2, f, k)
        gm = convexity_functional(model, t, p, mid, f, k)
        scale = max(abs(g1), abs(g2), 1.0)
        return (gm - 0.5 * (g1 + g2)) / scale

    viol = _map_trials(one, trials, threads)
    worst = float(max(viol))
    return CheckRecord("convexity", model.name, _params_str(model), worst, tol, worst <= tol,
                       {"trials": trials})


def check_fenchel(model, trials=200, seed=0, threads=None, tol_roundtrip=1e-10, tol_gap=1e-9):
    """Round trip ``DE*(DE(s)) = s`` and Fenchel-Young equality on random states."""
    g = model.grid

    def one(i):
        s = model.random_state([seed, i], c_amp=0.3 + 0.6 * ((i * 7919) % 101) / 100.0)
        z = model.subdiff_energy(s)
        back = model.subdiff_conjugate(z)
        rt = max(float(np.max(np.abs(back.v - s.v))), float(np.max(np.abs(back.C - s.C))))
        rt /= max(1.0, s.max_abs())
        gap = model.energy(s) + model.conjugate_energy(z) - pairing(g, z, s)
        return rt, abs(gap)

    res = _map_trials(one, trials, threads)
    rt = max(r[0] for r in res)
    gap = max(r[1] for r in res)
    ok = rt <= tol_roundtrip and gap <= tol_gap
    return CheckRecord("fenchel", model.name, _params_str(model), max(rt, gap),
                       tol_gap, ok, {"roundtrip": rt, "fy_gap": gap, "trials": trials})


def check_hessian(model, trials=5, seed=0, step=1e-4, tol=1e-6):
    """Compare ``D^2 E(s)[d]`` against central differences of ``DE``."""
    worst = 0.0
    for i in range(trials):
        s = model.random_state([seed, i, 1])
        d = model.random_state([seed, i, 2], c_amp=0.3)
        d = State(d.v, d.C - model.conf_minimizer() if model.conf_kind == "sym" else d.C)
        hp = model.subdiff_energy(s + d.scale(step))
        hm = model.subdiff_energy(s - d.scale(step))
        fd_w = (hp.w - hm.w) / (2 * step)
        fd_s = (hp.sigma - hm.sigma) / (2 * step)
        h = model.hessian_apply(s, d)
        num = max(np.max(np.abs(fd_w - h.w)), np.max(np.abs(fd_s - h.sigma)))
        den = max(np.max(np.abs(h.w)), np.max(np.abs(h.sigma)), 1e-300)
        worst = max(worst, float(num / den))
    return CheckRecord("hessian", model.name, _params_str(model), worst, tol, worst <= tol)
