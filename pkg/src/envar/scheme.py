"""Time-incremental min-max scheme and a semi-implicit baseline stepper.

One step of the min-max scheme looks for ``U^n`` in the constrained set

    D^n = {U : E(U) + tau Psi^n(U) <= E(U^{n-1})}

that makes the discrete variational functional

    F^n(U | Phi) = E(U) - E^{n-1} + tau K(Phi) (E(U) - E^{n-1} - tau C^n)
                   - <U - U^{n-1}, Phi> + tau Psi^n(U) - tau <A^n(U), Phi>

nonpositive for every test function ``Phi``.  Time averages over the step
use two-point Gauss quadrature.

Candidate and certificate
-------------------------
The candidate is the implicit Euler point ``U - U^{n-1} + tau R(U) = 0``,
where ``R`` is the Riesz representer of ``A^n``.  It is computed by a
Gauss-Seidel fixed point.  The velocity update is an exact spectral
Helmholtz solve, and the conformation update is a nodewise implicit
relaxation solve.  At that point the pairing terms of ``F^n`` cancel for
every discrete test function.  The remaining terms are nonpositive by
convexity of ``E`` together with the dissipation identity.

Every step is then certified.  ``K(lam Phi)`` is a quadratic polynomial in
``lam >= 0`` for all models, so the supremum of ``F^n(U | lam Phi)`` over
``lam`` in ``[0, lam_max]`` is available in closed form.  The certificate
``H(U)`` is the largest of these suprema over the signed test basis.  If
``H`` exceeds the tolerance, a golden-section search runs along the
retraction path ``DE*(theta DE(U))``.  Failure raises
:class:`SaddleNotConverged`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SaddleNotConverged, SpdLost
from .grid import TestFunction
from .model_api import DualState, State, pairing

__all__ = [
    "SchemeConfig",
    "AugmentedTrajectory",
    "StepInfo",
    "feasibility_alpha",
    "implicit_euler",
    "saddle_value",
    "minmax_step",
    "baseline_step",
    "run",
    "zero_test_function",
]


@dataclass
class SchemeConfig:
    """Parameters of a run.

    Parameters
    ----------
    tau : float
        Time step.  ``tau * K(0)`` must be below one.
    n_steps : int
        Number of steps.
    test_basis : list of TestFunction or None
        Finite test basis for the saddle certificate.  ``None`` leaves only
        the zero test function, which certifies the energy inequality.
    inner_iters : int
        Cap on fixed-point sweeps per step.
    outer_iters : int
        Cap on objective evaluations in the fallback line search.
    tol_saddle : float or None
        Absolute certificate tolerance.  ``None`` means
        ``1e-8 * (1 + E^{n-1})``.
    seed : int
        Seed recorded with the run.  The steppers themselves are deterministic.
    lambda_max : float
        Largest test-function scaling considered by the certificate.
    fp_tol : float
        Relative stopping tolerance of the fixed point.
    """

    tau: float
    n_steps: int
    test_basis: list | None = None
    inner_iters: int = 200
    outer_iters: int = 40
    tol_saddle: float | None = None
    seed: int = 0
    lambda_max: float = 1e4
    fp_tol: float = 1e-13
    constraint_tol: float = 1e-9

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ConfigError(f"scheme.tau must be a positive finite number, got {self.tau}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ConfigError(f"scheme.n_steps must be a nonnegative integer, got {self.n_steps}")
        if self.inner_iters < 1 or self.outer_iters < 1:
            raise ConfigError("scheme.inner_iters and scheme.outer_iters must be >= 1")
        if self.tol_saddle is not None and not self.tol_saddle > 0:
            raise ConfigError(f"scheme.tol_saddle must be > 0, got {self.tol_saddle}")

    def validate_for(self, model):
        """Check ``tau * K(0) < 1`` for ``model``."""
        k0 = model.reg_weight_k(zero_test_function(model.grid))
        if not self.tau * k0 < 1.0:
            raise ConfigError(
                f"scheme.tau = {self.tau:g} violates tau * K(0) < 1 (K(0) = {k0:g}); "
                f"use tau < {1.0 / k0:g}")

    def saddle_tol(self, e_prev):
        return self.tol_saddle if self.tol_saddle is not None else 1e-8 * (1.0 + e_prev)


@dataclass
class StepInfo:
    """Solver statistics of one step."""

    iterations: int = 0
    residual: float = 0.0
    saddle: float = 0.0
    alpha: float = 1.0
    retracted: bool = False


@dataclass
class AugmentedTrajectory:
    """Discrete trajectory ``(t_n, U_n, E_n)`` with per-step bookkeeping.

    ``dissipation[n]`` holds ``Psi^n(U^n)`` and ``c_psi[n]`` holds
    ``C_Psi^n``.  Both refer to step ``n``, which runs from ``t_{n-1}`` to
    ``t_n``.  Index 0 holds zeros.
    """

    tau: float
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    state_energies: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    c_psi: list = field(default_factory=list)
    info: list = field(default_factory=list)
    mode: str = "minmax"
    start_step: int = 0

    def __len__(self):
        return len(self.states)

    def append(self, t, U, E, e_state, psi, cpsi, info=None):
        self.times.append(t)
        self.states.append(U)
        self.energies.append(E)
        self.state_energies.append(e_state)
        self.dissipation.append(psi)
        self.c_psi.append(cpsi)
        self.info.append(info if info is not None else StepInfo())

    def index_of(self, t, atol=1e-12):
        """Index of the stored time ``t``, or ``None``."""
        times = np.asarray(self.times)
        i = int(np.argmin(np.abs(times - t)))
        return i if abs(times[i] - t) <= atol * max(1.0, abs(t)) else None

    def tv_running(self):
        e = np.asarray(self.energies)
        return np.concatenate([[0.0], np.cumsum(np.abs(np.diff(e)))])

    def energy_law_slack(self):
        """``max_n (E^n - tau C^n - E^{n-1})``, positive values are violations."""
        e = np.asarray(self.energies)
        c = np.asarray(self.c_psi)
        if len(e) < 2:
            return -math.inf
        return float(np.max(e[1:] - self.tau * c[1:] - e[:-1]))

    def tv_bound_holds(self):
        """``TV(E) <= E^0 + 2 tau sum C^n``, checked on the recorded series."""
        tv = self.tv_running()[-1]
        return bool(tv <= self.energies[0] + 2.0 * self.tau * float(np.sum(self.c_psi)))


def zero_test_function(grid):
    n = grid.n
    return TestFunction(np.zeros((n, n, 2)), np.zeros((n, n, 2, 2)), label="zero")


def _step_times(cfg, n):
    return (n - 1) * cfg.tau, n * cfg.tau


def _step_data(model, cfg, n):
    t0, t1 = _step_times(cfg, n)
    fbar = None if model.forcing.is_zero else model.force_average(t0, t1)
    return fbar, model.c_psi_average(t0, t1)


def _energy_plus_dissipation(model, U, tau, fbar):
    e = model.energy(U)
    if not math.isfinite(e):
        return math.inf
    return e + tau * model.dissipation_f(U, fbar)


# ---------------------------------------------------------------- feasibility
def feasibility_alpha(model, phi, target_energy, tau, fbar=None, max_bisect=60, tol=1e-10):
    """Scale ``Phi`` so that ``DE*(alpha Phi)`` satisfies the energy constraint.

    Parameters
    ----------
    model : Model
    phi : DualState or TestFunction
        Direction in the dual space.
    target_energy : float
        Right-hand side ``E(U^{n-1})`` of the constraint, ``>= 0``.
    tau : float
    fbar : ndarray or None
        Time-averaged force of the step.

    Returns
    -------
    alpha : float
        ``1`` when ``f(1) <= target``.  Otherwise the largest bisection
        point with ``f(alpha) <= target``.
    U : State
        ``DE*(alpha Phi)``.

    Notes
    -----
    ``f(alpha) = E(DE*(alpha Phi)) + tau Psi^n(DE*(alpha Phi))`` is continuous
    with ``f(0) = 0``.  Bisection keeps the feasible endpoint, so the returned
    state always lies in ``D^n``.
    """
    if target_energy < 0:
        raise ValueError(f"target_energy must be >= 0, got {target_energy}")
    z = phi if isinstance(phi, DualState) else DualState.from_test_function(phi)

    def f(a):
        U = model.subdiff_conjugate(z.scale(a))
        return _energy_plus_dissipation(model, U, tau, fbar), U

    f1, U1 = f(1.0)
    if f1 <= target_energy:
        return 1.0, U1
    lo, hi = 0.0, 1.0
    U_lo = model.subdiff_conjugate(z.scale(0.0))
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        fm, Um = f(mid)
        if fm <= target_energy:
            lo, U_lo = mid, Um
            if target_energy - fm <= tol:
                break
        else:
            hi = mid
    return lo, U_lo


# ------------------------------------------------------------ implicit Euler
def implicit_euler(model, U_prev, tau, fbar=None, max_iter=200, tol=1e-13, sweeps=None):
    """Gauss-Seidel fixed point for ``U - U_prev + tau R(U) = 0``.

    Each sweep solves ``(1 - tau mu lap) v = v_prev - tau P[...]`` with the
    explicit part taken at the current iterate.  It then solves the
    conformation equation ``C + tau rel(C) = C_prev - tau (transport +
    stretching)`` node by node, using the updated velocity.

    Parameters
    ----------
    sweeps : int or None
        If given, perform exactly this many sweeps without a convergence
        test (``sweeps=1`` is the semi-implicit baseline update).

    Returns
    -------
    U : State
    iterations : int
    increment : float
        Relative size of the last update.
    """
    g = model.grid
    mu = model.mu
    U = U_prev
    n_iter = sweeps if sweeps is not None else max_iter
    inc = math.inf
    for it in range(1, n_iter + 1):
        rv = model.explicit_velocity(U, fbar)
        v = g.solve_helmholtz(U_prev.v - tau * rv, 1.0, tau * mu)
        v = g.project_velocity(v)
        mid = State(v, U.C)
        rc = model.explicit_conf(mid)
        C = model.relaxation_solve(U_prev.C - tau * rc, tau)
        new = State(v, C)
        inc = (new - U).max_abs() / max(1.0, new.max_abs())
        U = new
        if sweeps is None and inc <= tol:
            return U, it, inc
    if sweeps is None:
        raise SaddleNotConverged(
            f"implicit Euler fixed point did not converge in {max_iter} sweeps "
            f"(last relative increment {inc:.3e}); reduce tau or raise inner_iters")
    return U, n_iter, inc


# --------------------------------------------------------------- certificate
@dataclass
class _BasisEntry:
    phi: TestFunction
    k0: float
    k1: float
    k2: float


def _basis_entries(model, basis):
    """Spatial test functions with the coefficients of ``K(lam Phi)``."""
    out = []
    for p in basis or []:
        sp = TestFunction(p.phi, p.sigma, label=p.label)
        for sgn in (1.0, -1.0):
            q = sp.scaled(sgn)
            K0 = model.reg_weight_k(q.scaled(0.0))
            K1 = model.reg_weight_k(q)
            K2 = model.reg_weight_k(q.scaled(2.0))
            k2 = max(0.5 * (K2 - 2.0 * K1 + K0), 0.0)
            k1 = K1 - K0 - k2
            out.append(_BasisEntry(q, K0, k1, k2))
    return out


def _sup_quadratic(c0, c1, c2, lam_max):
    """``max_{0 <= lam <= lam_max} c0 + c1 lam + c2 lam^2``."""
    cands = [0.0, lam_max]
    if c2 < 0.0:
        cands.append(min(max(-c1 / (2.0 * c2), 0.0), lam_max))
    return max(c0 + c1 * l + c2 * l * l for l in cands)


def saddle_value(model, U, U_prev, E_prev, tau, fbar, cpsi, entries, lam_max=1e4, k_zero=None):
    """Certificate ``H(U) = sup_Phi F^n(U | Phi)`` over the signed basis.

    Includes the zero test function.  Returns ``(H, details)``.  Here
    ``details`` maps each basis label to its supremum.  Returns ``+inf``
    outside the domain.
    """
    e = model.energy(U)
    if not math.isfinite(e):
        return math.inf, {}
    a = e - E_prev + tau * model.dissipation_f(U, fbar)
    c = tau * (e - E_prev - tau * cpsi)
    if k_zero is None:
        k_zero = model.reg_weight_k(zero_test_function(model.grid))
    best = a + c * k_zero
    details = {"zero": best}
    if entries:
        R = model.representer(U, fbar)
        dU = U - U_prev
        for ent in entries:
            b = -pairing(model.grid, ent.phi, dU) - tau * pairing(model.grid, ent.phi, R)
            val = _sup_quadratic(a + c * ent.k0, b + c * ent.k1, c * ent.k2, lam_max)
            details[ent.phi.label] = max(val, details.get(ent.phi.label, -math.inf))
            best = max(best, val)
    return best, details


def _golden_section(fun, lo, hi, iters):
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - gr * (hi - lo)
    x2 = lo + gr * (hi - lo)
    f1, f2 = fun(x1), fun(x2)
    best = min((f1, x1), (f2, x2))
    for _ in range(max(iters - 2, 0)):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - gr * (hi - lo)
            f1 = fun(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + gr * (hi - lo)
            f2 = fun(x2)
        best = min(best, (f1, x1), (f2, x2))
    return best


# --------------------------------------------------------------------- steps
def minmax_step(model, cfg, U_prev, E_prev, n, entries=None, k_zero=None):
    """One step of the constrained min-max scheme.

    Parameters
    ----------
    model : Model
    cfg : SchemeConfig
    U_prev : State
    E_prev : float
        Energy variable of the previous step, ``>= E(U_prev)``.
    n : int
        Index of the new time level (``t_n = n tau``).
    entries : list, optional
        Precomputed basis data from ``_basis_entries``.

    Returns
    -------
    U : State
    E : float
        ``E(U)``.
    info : StepInfo

    Raises
    ------
    SaddleNotConverged
        If neither the implicit Euler point nor the line search along the
        retraction path certifies ``H <= tol_saddle``.
    """
    tau = cfg.tau
    if entries is None:
        entries = _basis_entries(model, cfg.test_basis)
    if k_zero is None:
        k_zero = model.reg_weight_k(zero_test_function(model.grid))
    fbar, cpsi = _step_data(model, cfg, n)
    tol = cfg.saddle_tol(E_prev)

    U, iters, inc = implicit_euler(model, U_prev, tau, fbar, cfg.inner_iters, cfg.fp_tol)
    info = StepInfo(iterations=iters, residual=inc)

    # constraint: retract along DE*(alpha DE(U)) if needed
    if _energy_plus_dissipation(model, U, tau, fbar) > E_prev + cfg.constraint_tol:
        alpha, U = feasibility_alpha(model, model.subdiff_energy(U), E_prev, tau, fbar)
        info.alpha, info.retracted = alpha, True

    H, _ = saddle_value(model, U, U_prev, E_prev, tau, fbar, cpsi, entries, cfg.lambda_max, k_zero)
    if H > tol:
        z = model.subdiff_energy(U)
        top = info.alpha

        def h_of(theta):
            cand = model.subdiff_conjugate(z.scale(theta / top))
            if _energy_plus_dissipation(model, cand, tau, fbar) > E_prev + cfg.constraint_tol:
                return math.inf
            return saddle_value(model, cand, U_prev, E_prev, tau, fbar, cpsi, entries,
                                cfg.lambda_max, k_zero)[0]

        h_best, theta = _golden_section(h_of, 0.0, top, cfg.outer_iters)
        if h_best > tol:
            raise SaddleNotConverged(
                f"step {n}: saddle certificate {min(H, h_best):.3e} exceeds "
                f"tolerance {tol:.3e}; enlarge inner_iters or reduce tau")
        U = model.subdiff_conjugate(z.scale(theta / top))
        info.alpha, info.retracted, H = theta, True, h_best
    info.saddle = H
    return U, model.energy(U), info


def baseline_step(model, cfg, U_prev, n=1):
    """Semi-implicit step: one Gauss-Seidel sweep of the implicit Euler map.

    Viscosity and relaxation are implicit, transport and stretching are
    explicit, and the velocity is Leray-projected.  The conformation field
    is symmetrized (models Q and S) or dealiased (model LLZ).

    Raises
    ------
    SpdLost
        If the nodewise relaxation solve has no SPD solution.
    """
    fbar, _ = _step_data(model, cfg, n)
    try:
        U, _, _ = implicit_euler(model, U_prev, cfg.tau, fbar, sweeps=1)
    except SpdLost as err:
        raise SpdLost(f"step {n}: {err}", node=err.node, step=n) from None
    if model.conf_kind == "sym" and not model.conf_in_domain(U.C):
        raise SpdLost(f"step {n}: conformation field left the SPD cone", step=n)
    return U


def run(model, cfg, U0, mode="minmax", start_step=0, E0=None, callback=None):
    """Integrate ``n_steps`` steps from ``U0``.

    Parameters
    ----------
    model : Model
    cfg : SchemeConfig
    U0 : State
        Initial state in the domain of the energy.
    mode : {"minmax", "baseline"}
    start_step : int
        Index of ``U0`` on the global time grid.  A restart from
        ``(U_k, E_k)`` with ``start_step=k`` reproduces the original run
        bitwise.
    E0 : float, optional
        Initial energy variable, ``E(U0)`` by default.
    callback : callable, optional
        Called as ``callback(n, U, E, info)`` after each step.

    Returns
    -------
    AugmentedTrajectory
    """
    if mode not in ("minmax", "baseline"):
        raise ConfigError(f"scheme.mode must be 'minmax' or 'baseline', got {mode!r}")
    e0 = model.energy(U0)
    if not math.isfinite(e0):
        raise SpdLost("initial conformation field is not SPD", step=start_step)
    cfg.validate_for(model)
    E = e0 if E0 is None else float(E0)
    traj = AugmentedTrajectory(tau=cfg.tau, mode=mode, start_step=start_step)
    traj.append(start_step * cfg.tau, U0, E, e0, 0.0, 0.0)
    entries = _basis_entries(model, cfg.test_basis) if mode == "minmax" else None
    k_zero = model.reg_weight_k(zero_test_function(model.grid))
    U = U0
    for j in range(1, cfg.n_steps + 1):
        n = start_step + j
        if mode == "minmax":
            U, E, info = minmax_step(model, cfg, U, E, n, entries, k_zero)
        else:
            U = baseline_step(model, cfg, U, n)
            E = model.energy(U)
            info = StepInfo(iterations=1)
        fbar, cpsi = _step_data(model, cfg, n)
        psi = model.dissipation_f(U, fbar)
        traj.append(n * cfg.tau, U, E, model.energy(U), psi, cpsi, info)
        if callback is not None:
            callback(n, U, E, info)
    return traj
