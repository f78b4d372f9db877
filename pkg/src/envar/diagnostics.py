"""Certification of discrete trajectories.

The central object is the left-hand side of the energy-variational
inequality for a test function ``Phi`` on a window ``[s, t]``:

    [E - <U, Phi>]_s^t + int_s^t <U, d_t Phi> + Psi(U) - <A(U), Phi>
                                 + K(Phi) (E(U) - E) dtau,

which must be nonpositive.  On a stored trajectory the integrand is
evaluated with one of two rules.

``"prolongation"`` (default)
    Uses the piecewise-constant prolongations of the scheme.  States and
    ``Psi^n``/``A^n`` are taken at the right end of each step, and ``Phi`` at
    the left end.  The regularity term is ``K(Phi^{n-1}) (E(U^n) - E^{n-1} -
    tau C^n)``, and the ``d_t Phi`` term is integrated exactly.  With this
    rule the window value is the sum of the step objectives ``F^n(U^n |
    Phi^{n-1})``.  It converges to the continuous expression as
    ``tau -> 0``.
``"trapezoid"``
    Uses nodal values with the trapezoidal rule.  It is consistent only to
    ``O(tau)``, because the scheme is implicit in time.

Every rule yields per-step increments, so all windows follow from one
prefix sum.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import tensor_core as tc
from .errors import Misaligned, NotPositiveDefinite
from .grid import TestFunction
from .model_api import State, check_convexity, pairing

__all__ = [
    "EviReport",
    "RelEnergySeries",
    "default_test_basis",
    "evi_increments",
    "evi_residual",
    "evi_report",
    "weak_solution_probe",
    "relative_energy",
    "relative_energy_q",
    "relative_dissipation",
    "relative_dissipation_q",
    "confirm_relative_dissipation",
    "gronwall_weak_strong",
    "bv_postprocess",
    "peterlin_form",
    "peterlin_energy_term",
    "peterlin_nonconvexity_witness",
    "taylor_green",
    "relaxation_solution_q",
    "relaxation_solution_s",
    "ManufacturedSolution",
    "smooth_spd_field",
]


# ------------------------------------------------------------- test basis
def _solenoidal_mode(grid, kx, ky, trig):
    X, Y = grid.coords
    arg = 2.0 * np.pi * (kx * X + ky * Y) / grid.L
    s = np.sin(arg) if trig == "sin" else np.cos(arg)
    nrm = math.hypot(kx, ky)
    return np.stack([-ky / nrm * s, kx / nrm * s], axis=-1)


def _matrix_modes(grid, general):
    X, Y = grid.coords
    k = 2.0 * np.pi / grid.L
    one = np.ones_like(X)
    I = np.eye(2)
    dev = np.diag([1.0, -1.0])
    off = np.array([[0.0, 1.0], [1.0, 0.0]])
    skw = np.array([[0.0, 1.0], [-1.0, 0.0]])
    modes = [
        ("sig_I", one, I),
        ("sig_-I", one, -I),
        ("sig_dev", one, dev),
        ("sig_off", one, off),
        ("sig_cosx_I", np.cos(k * X), I),
        ("sig_siny_dev", np.sin(k * Y), dev),
        ("sig_cosxy_off", np.cos(k * (X + Y)), off),
    ]
    if general:
        modes.append(("sig_sinx_skw", np.sin(k * X), skw))
    else:
        modes.append(("sig_sinx_I", np.sin(k * X), 0.5 * I))
    return [(lab, a[..., None, None] * M) for lab, a, M in modes]


def default_test_basis(model, T, amplitude=1.0):
    """The default diagnostic basis of 24 test functions.

    * 8 solenoidal velocity modes: ``k in {(1,0), (0,1), (1,1), (1,-1)}``,
      each with a sine and a cosine profile.
    * 8 matrix fields.  These are the constants ``I``, ``-I``, a deviator
      and an off-diagonal matrix, plus four low-mode fields.  For general
      matrix unknowns one low mode is skew.
    * 8 mixed functions ``cos(pi k t / T) (phi_k, sigma_k)``, ``k = 1..8``.
      Each pairs the k-th velocity mode with the k-th matrix field.

    Parameters
    ----------
    model : Model
    T : float
        Final time of the trajectory.  It sets the time scale of the
        mixed functions.
    amplitude : float
        Common scale of all spatial profiles.
    """
    g = model.grid
    n = g.n
    zv = np.zeros((n, n, 2))
    zs = np.zeros((n, n, 2, 2))
    vel = []
    for kx, ky in ((1, 0), (0, 1), (1, 1), (1, -1)):
        for trig in ("sin", "cos"):
            vel.append((f"v_{trig}_{kx}_{ky}", amplitude * _solenoidal_mode(g, kx, ky, trig)))
    mats = [(lab, amplitude * M) for lab, M in _matrix_modes(g, model.conf_kind != "sym")]
    if model.conf_band_limited:
        mats = [(lab, g.dealias(M)) for lab, M in mats]
    basis = [TestFunction(p, zs.copy(), label=lab) for lab, p in vel]
    basis += [TestFunction(zv.copy(), M, label=lab) for lab, M in mats]
    for k in range(1, 9):
        (lv, p), (ls, M) = vel[k - 1], mats[k - 1]
        w = math.pi * k / T
        basis.append(TestFunction(
            p, M,
            coeff=lambda t, w=w: math.cos(w * t),
            dcoeff=lambda t, w=w: -w * math.sin(w * t),
            label=f"mix{k}_{lv}_{ls}"))
    return basis


# --------------------------------------------------------------- EVI
@dataclass
class EviReport:
    """Worst EVI left-hand sides over a basis and a set of windows."""

    rule: str
    tol: float
    stride: int
    worst: float
    worst_label: str
    worst_window: tuple
    per_function: dict = field(default_factory=dict)
    n_windows: int = 0

    @property
    def passed(self):
        return self.worst <= self.tol

    def rows(self):
        return [{"check": f"evi[{lab}]", "residual": v, "tolerance": self.tol,
                 "pass": v <= self.tol} for lab, v in self.per_function.items()]


def _k_quadratic(model, spatial):
    """Coefficients of ``K(c Phi)`` as a quadratic in ``|c|`` for each sign of ``c``."""
    out = {}
    for sgn in (1.0, -1.0):
        q = spatial.scaled(sgn)
        K0 = model.reg_weight_k(q.scaled(0.0))
        K1 = model.reg_weight_k(q)
        K2 = model.reg_weight_k(q.scaled(2.0))
        k2 = 0.5 * (K2 - 2.0 * K1 + K0)
        out[sgn] = (K0, K1 - K0 - k2, k2)
    return out


def _k_of(coeffs, c):
    k0, k1, k2 = coeffs[1.0 if c >= 0 else -1.0]
    a = abs(c)
    return k0 + k1 * a + k2 * a * a


def _forces(model, traj):
    """Per-step Gauss-averaged force and nodal force (``None`` when zero)."""
    if model.forcing.is_zero:
        return [None] * len(traj), [None] * len(traj)
    nodal = [model.force(t) for t in traj.times]
    avg = [None]
    for n in range(1, len(traj)):
        avg.append(model.force_average(traj.times[n - 1], traj.times[n]))
    return avg, nodal


def evi_increments(model, traj, phi, rule="prolongation", _forces_cache=None):
    """Per-step increments ``d_n`` of the EVI left-hand side.

    The window value is ``lhs(t_i, t_j) = sum_{n=i+1}^{j} d_n``.  Returns an
    array of length ``len(traj)`` with ``d_0 = 0``.
    """
    if rule not in ("prolongation", "trapezoid"):
        raise ValueError(f"unknown rule {rule!r}")
    g = model.grid
    N = len(traj)
    tau = traj.tau
    spatial = TestFunction(phi.phi, phi.sigma, label=phi.label)
    kq = _k_quadratic(model, spatial)
    avg, nodal = _forces_cache if _forces_cache is not None else _forces(model, traj)
    t = traj.times
    c = [phi.c(tt) for tt in t]
    dc = [phi.dc(tt) for tt in t]
    # <U^n, Phi_spatial>
    up = [pairing(g, spatial, U) for U in traj.states]
    E = traj.energies
    EU = traj.state_energies
    d = np.zeros(N)
    if rule == "prolongation":
        for n in range(1, N):
            a_n = model.operator_a_f(traj.states[n], spatial, avg[n])
            bracket = (E[n] - E[n - 1]) - (c[n] * up[n] - c[n - 1] * up[n - 1])
            dphi = (c[n] - c[n - 1]) * up[n]
            kterm = _k_of(kq, c[n - 1]) * (EU[n] - E[n - 1] - tau * traj.c_psi[n])
            d[n] = bracket + dphi + tau * (traj.dissipation[n] - c[n - 1] * a_n + kterm)
        return d
    # trapezoid
    gvals = np.zeros(N)
    for m in range(N):
        U = traj.states[m]
        a_m = model.operator_a_f(U, spatial, nodal[m])
        psi = model.dissipation_f(U, nodal[m])
        kterm = _k_of(kq, c[m]) * (EU[m] - E[m])
        gvals[m] = dc[m] * up[m] + psi - c[m] * a_m + kterm
    for n in range(1, N):
        bracket = (E[n] - E[n - 1]) - (c[n] * up[n] - c[n - 1] * up[n - 1])
        d[n] = bracket + 0.5 * tau * (gvals[n - 1] + gvals[n])
    return d


def _index(traj, t):
    i = traj.index_of(t)
    if i is None:
        raise Misaligned(f"time {t!r} is not on the stored time grid "
                         f"(tau = {traj.tau:g}, t in [{traj.times[0]:g}, {traj.times[-1]:g}])")
    return i


def evi_residual(model, traj, phi, s, t, rule="prolongation"):
    """EVI left-hand side of ``phi`` on ``[s, t]``; must be ``<= evi_tol``.

    Raises
    ------
    Misaligned
        If ``s`` or ``t`` is not a stored time, or ``s >= t``.
    """
    i, j = _index(traj, s), _index(traj, t)
    if not i < j:
        raise Misaligned(f"need s < t, got s={s!r}, t={t!r}")
    d = evi_increments(model, traj, phi, rule)
    return float(np.sum(d[i + 1:j + 1]))


def evi_report(model, traj, basis, stride=8, tol=None, rule="prolongation", threads=None):
    """Worst EVI left-hand side over ``basis`` and all windows at ``stride``.

    ``tol`` defaults to ``1e-6 (1 + E(0))``.
    """
    if tol is None:
        tol = 1e-6 * (1.0 + traj.energies[0])
    forces = _forces(model, traj)
    idx = list(range(0, len(traj), stride))
    if idx[-1] != len(traj) - 1:
        idx.append(len(traj) - 1)

    def one(phi):
        d = evi_increments(model, traj, phi, rule, forces)
        P = np.concatenate([[0.0], np.cumsum(d[1:])])
        Pi = P[idx]
        diff = Pi[None, :] - Pi[:, None]  # [a, b] = lhs(t_idx[a], t_idx[b])
        mask = np.triu(np.ones_like(diff, dtype=bool), k=1)
        vals = np.where(mask, diff, -np.inf)
        a, b = np.unravel_index(int(np.argmax(vals)), vals.shape)
        return float(vals[a, b]), (traj.times[idx[a]], traj.times[idx[b]])

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            res = list(ex.map(one, basis))
    else:
        res = [one(p) for p in basis]
    per = {}
    worst, wl, ww = -math.inf, "", ()
    for phi, (v, win) in zip(basis, res):
        per[phi.label] = v
        if v > worst:
            worst, wl, ww = v, phi.label, win
    nwin = len(idx) * (len(idx) - 1) // 2
    return EviReport(rule, tol, stride, worst, wl, ww, per, nwin)


def weak_solution_probe(model, traj, theta, alphas=(1.0, 0.1, 0.01), s=None, t=None,
                        rule="trapezoid"):
    """Recover the weak-formulation residual from the EVI at ``Phi = +-Theta / alpha``.

    The EVI left-hand side is ``l(Phi) = e + L(Phi) + k(Phi)``.  Here ``e``
    is the energy part, ``L`` is the linear weak-form residual and ``k``
    is the regularity term.  Multiplying by ``alpha`` gives
    ``alpha l(+-Theta/alpha) = alpha e +- L(Theta) + alpha k(+-Theta/alpha)``.
    Half the difference of the two signs isolates ``L(Theta)`` up to the
    regularity terms, which vanish when ``E = E(U)`` at the nodes.

    Returns
    -------
    dict
        ``residual`` is the estimate at the smallest alpha.  ``spread`` is
        the relative variation across alphas.  ``gap`` is the largest
        one-sided value ``max(alpha l(+-Theta/alpha))``.  ``per_alpha``
        lists the tuples ``(alpha, plus, minus, estimate)``.
    """
    s = traj.times[0] if s is None else s
    t = traj.times[-1] if t is None else t
    rows = []
    for a in alphas:
        plus = a * evi_residual(model, traj, theta.scaled(1.0 / a), s, t, rule)
        minus = a * evi_residual(model, traj, theta.scaled(-1.0 / a), s, t, rule)
        rows.append((a, plus, minus, 0.5 * (plus - minus)))
    ests = np.array([r[3] for r in rows])
    # roundoff floor so that an exactly vanishing residual reports zero spread
    ref = max(abs(ests[-1]), 1e-12 * (1.0 + abs(traj.energies[0])))
    return {
        "residual": float(ests[-1]),
        "spread": float(np.max(np.abs(ests - ests[-1])) / ref),
        "gap": float(max(max(r[1], r[2]) for r in rows)),
        "per_alpha": rows,
    }


# --------------------------------------------------- relative energy
def relative_energy(model, s, E, s_tilde):
    """``R = E - E(U~) - <DE(U~), U - U~>`` (definition)."""
    z = model.subdiff_energy(s_tilde)
    return float(E - model.energy(s_tilde) - pairing(model.grid, z, s - s_tilde))


def _bregman_energy_q(model, s, s_tilde):
    """Integrand of the Bregman distance of the model-Q energy."""
    b = model.params.beta
    ev = s.v - s_tilde.v
    eB = s.C - s_tilde.C
    Bt_inv = tc.spd_inv(s_tilde.C)
    M = Bt_inv @ s.C
    logdet = tc.trace_log(s.C) - tc.trace_log(s_tilde.C)
    return (0.5 * np.sum(ev * ev, axis=-1) + 0.5 * b * tc.frob2(eB)
            + (1 - b) * (tc.trace(M) - 2.0 - logdet))


def relative_energy_q(model, s, E, s_tilde):
    """Relative energy of model Q in simplified closed form.

    ``E - E(v, B) + int |v - v~|^2 / 2 + beta/2 |B - B~|^2
    + (1 - beta) tr(B~^{-1} B - I - log(B~^{-1} B))``.
    """
    tc.require_spd(s_tilde.C, what="reference conformation")
    g = model.grid
    return float(E - model.energy(s) + g.integrate(_bregman_energy_q(model, s, s_tilde)))


def _g_functional(model, phi_t, k, s):
    """``Psi(U) - <A(U), Phi~> + K E(U)`` without forcing (linear parts cancel)."""
    return model.dissipation_f(s, None) - model.operator_a_f(s, phi_t, None) + k * model.energy(s)


def relative_dissipation(model, s, s_tilde, step=1e-3):
    """Generic relative dissipation: Bregman distance of ``G`` at ``U~``.

    ``G(U) = Psi(U) - <A(U), Phi~> + K(Phi~) E(U)`` with ``Phi~ = DE(U~)``.
    The directional derivative of ``Psi - <A, Phi~>`` is taken by a
    fourth-order central difference.  The energy derivative is analytic.
    """
    z = model.subdiff_energy(s_tilde)
    phi_t = z.as_test_function()
    k = model.reg_weight_k(phi_t)
    d = s - s_tilde
    scale = d.max_abs()
    if scale == 0.0:
        return 0.0
    h = step / scale

    def g0(x):
        return model.dissipation_f(x, None) - model.operator_a_f(x, phi_t, None)

    fp1, fm1 = g0(s_tilde + d.scale(h)), g0(s_tilde - d.scale(h))
    fp2, fm2 = g0(s_tilde + d.scale(2 * h)), g0(s_tilde - d.scale(2 * h))
    deriv = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h)
    bregman_g0 = g0(s) - g0(s_tilde) - deriv
    bregman_e = model.energy(s) - model.energy(s_tilde) - pairing(model.grid, z, d)
    return float(bregman_g0 + k * bregman_e)


def relative_dissipation_q(model, s, s_tilde):
    """Relative dissipation of model Q, assembled group by group.

    With ``e_v = v - v~``, ``e_B = B - B~`` and ``sigma~ = DE(B~)``:

    * ``mu |grad e_v|^2``
    * ``(1 - beta) tr(B^{-1} - 2 B~^{-1} + B~^{-2} B)``
    * ``(beta + delta (1 - beta)) |e_B|^2``
    * ``delta beta tr((B + 2 B~ - 2 I) e_B^2)``
    * ``(e_v (x) e_v - alpha beta e_B^2) : grad v~``
    * ``(e_B (x) e_v) : grad sigma~``, contracting ``e_B_ij e_v_k d_k sigma~_ij``
    * ``(2 (grad e_v)_skw e_B + alpha (grad e_v)_sym e_B) : sigma~``
    * ``-delta e_B^2 : sigma~``
    * ``K(DE(U~))`` times the energy Bregman distance.
    """
    p = model.params
    g = model.grid
    tc.require_spd(s_tilde.C, what="reference conformation")
    B, Bt = s.C, s_tilde.C
    ev = s.v - s_tilde.v
    eB = B - Bt
    eB2 = eB @ eB
    I = np.eye(2)
    Bt_inv = tc.spd_inv(Bt)
    B_inv = tc.spd_inv(B)
    sig = model.conf_subdiff(Bt)
    gv_t = g.grad(s_tilde.v)
    gev = g.grad(ev)
    gsig = g.grad(sig)
    dens = (p.mu * tc.frob2(gev)
            + (1 - p.beta) * tc.trace(B_inv - 2.0 * Bt_inv + Bt_inv @ Bt_inv @ B)
            + (p.beta + p.delta * (1 - p.beta)) * tc.frob2(eB)
            + p.delta * p.beta * tc.trace((B + 2.0 * Bt - 2.0 * I) @ eB2)
            + tc.contract(ev[..., :, None] * ev[..., None, :] - p.alpha * p.beta * eB2, gv_t)
            + np.einsum("...ij,...k,...ijk->...", eB, ev, gsig)
            + tc.contract(2.0 * tc.skw_part(gev) @ eB + p.alpha * tc.sym_part(gev) @ eB, sig)
            - p.delta * tc.contract(eB2, sig))
    k = model.reg_weight_k(TestFunction(s_tilde.v, sig))
    return float(g.integrate(dens) + k * g.integrate(_bregman_energy_q(model, s, s_tilde)))


def confirm_relative_dissipation(model, s_tilde, trials=50, seed=0, t=0.0):
    """Convexity check at ``Phi = DE(U~)``, the hypothesis behind ``W >= 0``."""
    phi = model.subdiff_energy(s_tilde).as_test_function()
    return check_convexity(model, t, phi, trials=trials, seed=seed)


# ------------------------------------------------ manufactured solutions
@dataclass
class ManufacturedSolution:
    """Exact solution ``t -> U~(t)`` together with the force that drives it."""

    state: object
    forcing: object = None
    label: str = ""

    def __call__(self, t):
        return self.state(t)


def taylor_green(grid, mu, amplitude=1.0, conf=None):
    """Decaying Taylor-Green vortex with a constant conformation field.

    ``v = A exp(-2 mu k^2 t) (sin kx cos ky, -cos kx sin ky)`` with
    ``k = 2 pi / L``.  The convective term is a gradient and is removed by the
    projection, so ``(v, conf)`` is an exact solution.  Here ``conf`` must
    be a constant field annihilated by stretching and relaxation.  The
    zero matrix works for model LLZ.
    """
    X, Y = grid.coords
    k = 2.0 * np.pi / grid.L
    base = np.stack([np.sin(k * X) * np.cos(k * Y), -np.cos(k * X) * np.sin(k * Y)], axis=-1)
    C = np.zeros((grid.n, grid.n, 2, 2)) if conf is None else conf

    def state(t):
        return State(amplitude * math.exp(-2.0 * mu * k * k * t) * base, C.copy())

    return ManufacturedSolution(state, None, "taylor_green")


def smooth_spd_field(grid, amplitude=0.4):
    """Grid-independent smooth SPD field for refinement studies.

    ``I + a [[cos 2 pi x, 0.3 sin 2 pi (x + y)], [., 0.5 sin 2 pi y]]`` in
    units of ``L``.  Its eigenvalues stay above ``1 - 1.3 a``.
    """
    X, Y = grid.coords
    k = 2.0 * np.pi / grid.L
    C = np.zeros((grid.n, grid.n, 2, 2))
    C[..., 0, 0] = 1.0 + amplitude * np.cos(k * X)
    C[..., 1, 1] = 1.0 + 0.5 * amplitude * np.sin(k * Y)
    C[..., 0, 1] = C[..., 1, 0] = 0.3 * amplitude * np.sin(k * (X + Y))
    return C


def _eig_evolve(C0, fn):
    lam, Q = tc.eigh_sym(C0)
    return lambda t: tc.sym_part(np.einsum("...ik,...k,...jk->...ij", Q, fn(lam, t), Q))


def relaxation_solution_q(model, B0):
    """Resting fluid with relaxing conformation, model Q.

    With ``v = 0`` each eigenvalue obeys ``x' = -x (1 + delta + delta x)``
    with ``x = lambda - 1``.  Its solution is
    ``x(t) = (1 + d) x0 e^{-(1+d) t} / (1 + d + d x0 (1 - e^{-(1+d) t}))``.
    The force ``f = -P div T(B~(t))`` keeps the fluid at rest.
    """
    from .model_api import CallableForcing

    dl = model.params.delta
    g = model.grid

    def per(lam, t):
        x0 = lam - 1.0
        e = math.exp(-(1.0 + dl) * t)
        return 1.0 + (1.0 + dl) * x0 * e / (1.0 + dl + dl * x0 * (1.0 - e))

    evolve = _eig_evolve(B0, per)
    zero = np.zeros((g.n, g.n, 2))

    def state(t):
        return State(zero.copy(), evolve(t))

    forcing = CallableForcing(lambda t: -g.div_mat(model.stress(evolve(t))), "q_relaxation")
    return ManufacturedSolution(state, forcing, "q_relaxation")


def relaxation_solution_s(model, F0):
    """Resting fluid with relaxing deformation, model S.

    Each eigenvalue obeys ``lambda' = -(lambda - 1/lambda) / mu_p``, so
    ``lambda(t)^2 = 1 + (lambda0^2 - 1) exp(-2 t / mu_p)``.
    """
    from .model_api import CallableForcing

    mp = model.params.mu_p
    g = model.grid

    def per(lam, t):
        return np.sqrt(1.0 + (lam * lam - 1.0) * math.exp(-2.0 * t / mp))

    evolve = _eig_evolve(F0, per)
    zero = np.zeros((g.n, g.n, 2))

    def state(t):
        return State(zero.copy(), evolve(t))

    forcing = CallableForcing(lambda t: -g.div_mat(model.stress(evolve(t))), "s_relaxation")
    return ManufacturedSolution(state, forcing, "s_relaxation")


# ------------------------------------------------------------ Gronwall
@dataclass
class RelEnergySeries:
    """Relative energy along a pair of trajectories and its Gronwall bound."""

    times: np.ndarray
    R: np.ndarray
    W: np.ndarray
    K: np.ndarray
    envelope: np.ndarray
    budget: np.ndarray
    step_objective: np.ndarray
    tol: float = 1e-12

    @property
    def bound(self):
        return self.envelope + self.budget

    @property
    def passed(self):
        scale = max(1.0, float(np.max(np.abs(self.R))))
        return bool(np.all(self.R <= self.bound + self.tol * scale)
                    and np.all(self.W >= -1e-9 * scale))

    def rows(self):
        return [{"t": t, "R": r, "W": w, "K": k, "envelope": e, "budget": b}
                for t, r, w, k, e, b in zip(self.times, self.R, self.W, self.K,
                                            self.envelope, self.budget)]


class GateRefused(NotPositiveDefinite):
    """The reference trajectory fails the strong-solution regularity gate."""


def _gate(model, s_tilde, det_floor):
    if model.conf_kind != "sym":
        if not np.all(np.isfinite(s_tilde.C)):
            raise GateRefused("reference deformation field is not finite")
        return
    det = tc.det_cofactor(s_tilde.C)
    if not (np.all(np.isfinite(det)) and np.min(det) >= det_floor
            and np.all(tc.is_spd(s_tilde.C))):
        raise GateRefused(
            f"reference conformation violates the regularity gate: min det "
            f"{float(np.min(det)):.3e} < {det_floor:g}; refusing the Gronwall report")


def gronwall_weak_strong(model, traj, strong, det_floor=1e-3, tol=1e-12):
    """Relative energy ``R(t)`` against a reference solution and its bound.

    Parameters
    ----------
    model : Model
    traj : AugmentedTrajectory
        Min-max trajectory ``(U^n, E^n)``.
    strong : callable or AugmentedTrajectory
        Reference solution ``t -> U~(t)``, or a stored trajectory on the
        same time grid.
    det_floor : float
        Regularity gate ``det B~ >= det_floor`` for SPD unknowns.

    Returns
    -------
    RelEnergySeries

    Notes
    -----
    The discrete relative-energy defect of step ``n`` is
    ``d_n = R^n - R^{n-1} + tau W^n - tau K^{n-1} R^n``.  It splits into the
    step objective ``F^n(U^n | DE(U~^{n-1}))``, which the scheme certifies
    nonpositive, and a consistency part ``b_n``.  ``b_n`` collects the
    time-discretization error and the residual of ``U~`` in the discrete
    equations, and it vanishes as ``tau, h -> 0``.  Discrete Gronwall then
    gives ``R^n <= R^0 prod (1 - tau K)^{-1} + budget^n``, which holds
    whenever ``W >= 0``.  The budget accumulates ``b_n^+ + F_n^+`` with
    the same growth factors.  The reported envelope is
    ``R^0 exp(int K)``.  The product form's excess over it is moved into
    the budget.
    """
    N = len(traj)
    tau = traj.tau
    ref = [strong.states[n] for n in range(N)] if hasattr(strong, "states") \
        else [strong(t) for t in traj.times]
    for s_t in ref:
        _gate(model, s_t, det_floor)
    R = np.array([relative_energy(model, traj.states[n], traj.energies[n], ref[n])
                  for n in range(N)])
    W = np.zeros(N)
    K = np.zeros(N)
    for n in range(N):
        phi_t = model.subdiff_energy(ref[n]).as_test_function()
        K[n] = model.reg_weight_k(phi_t)
        if n > 0:
            W[n] = relative_dissipation(model, traj.states[n], ref[n])
    avg, _ = _forces(model, traj)
    Fobj = np.zeros(N)
    for n in range(1, N):
        phi = model.subdiff_energy(ref[n - 1]).as_test_function()
        U, Up = traj.states[n], traj.states[n - 1]
        Fobj[n] = ((traj.energies[n] - traj.energies[n - 1])
                   * (1.0 + tau * K[n - 1])
                   - tau * tau * K[n - 1] * traj.c_psi[n]
                   - pairing(model.grid, phi, U - Up)
                   + tau * traj.dissipation[n]
                   - tau * model.operator_a_f(U, phi, avg[n]))
    intK = np.concatenate([[0.0], np.cumsum(tau * K[:-1])])
    envelope = R[0] * np.exp(intK)
    budget = np.zeros(N)
    growth = 1.0
    for n in range(1, N):
        fac = 1.0 - tau * K[n - 1]
        if not fac > 0:
            raise ValueError(f"tau K = {tau * K[n - 1]:g} >= 1 at step {n}; refine tau")
        defect = R[n] - R[n - 1] + tau * W[n] - tau * K[n - 1] * R[n]
        b = defect - Fobj[n]
        growth /= fac
        budget[n] = (budget[n - 1] + max(b, 0.0) + max(Fobj[n], 0.0)) / fac
        budget[n] = max(budget[n], 0.0)
    # product form of the discrete exponential, excess over exp(int K)
    prod = np.concatenate([[1.0], np.cumprod(1.0 / (1.0 - tau * K[:-1]))])
    budget = budget + R[0] * (prod - np.exp(intK))
    return RelEnergySeries(np.asarray(traj.times), R, W, K, envelope, budget, Fobj, tol)


# ------------------------------------------------------------------ BV
def bv_postprocess(E, c_psi=None, tau=None, forced=None, tol=0.0):
    """Total variation and jump structure of an energy series.

    Parameters
    ----------
    E : sequence of float
    c_psi, tau : optional
        Per-step ``C_Psi^n`` (index 0 unused) and step size.  With them the
        bound ``TV <= E(0) + 2 tau sum C^n`` is checked.
    forced : bool, optional
        ``False`` asserts the unforced identities ``TV = E(0) - E(end)`` and
        downward jumps.  Defaults to ``c_psi`` being absent or zero.
    tol : float
        Size of an upward step that still counts as flat.

    Returns
    -------
    dict
        ``tv``, ``jumps`` (indices ``i`` with ``E[i] > E[i-1] + tol``),
        ``monotone``, ``tv_bound``, ``bound_ok`` and ``identity_ok``.
    """
    e = np.asarray(E, dtype=float)
    diffs = np.diff(e)
    tv = float(np.sum(np.abs(diffs)))
    jumps = [int(i) + 1 for i in np.flatnonzero(diffs > tol)]
    out = {"tv": tv, "jumps": jumps, "monotone": not jumps}
    if forced is None:
        forced = c_psi is not None and bool(np.any(np.asarray(c_psi) != 0))
    if c_psi is not None and tau is not None:
        bound = float(e[0] + 2.0 * tau * np.sum(c_psi))
        out["tv_bound"] = bound
        out["bound_ok"] = tv <= bound
    if not forced:
        out["identity_ok"] = bool(not jumps and abs(tv - (e[0] - e[-1]))
                                  <= 1e-12 * max(1.0, abs(e[0])))
    return out


# ------------------------------------------------------------- Peterlin
def peterlin_form(B, G):
    """``-2 tr(G) tr(B^-1 G B^-1) + 2 tr(B) tr(B^-1 G B^-1 G B^-1)``."""
    B = np.asarray(B, dtype=float)
    G = np.asarray(G, dtype=float)
    Bi = tc.spd_inv(B)
    return (-2.0 * tc.trace(G) * tc.trace(Bi @ G @ Bi)
            + 2.0 * tc.trace(B) * tc.trace(Bi @ G @ Bi @ G @ Bi))


def peterlin_energy_term(B, G):
    """Energy Hessian term ``tr((B^-1 G)^2)`` added in the ``eta`` sweep."""
    Bi = tc.spd_inv(np.asarray(B, dtype=float))
    M = Bi @ np.asarray(G, dtype=float)
    return tc.trace(M @ M)


def peterlin_nonconvexity_witness(search_steps=0, seed=0, eta_max=10.0, n_eta=101):
    """SPD ``B`` and symmetric ``G`` with a negative Peterlin form.

    The construction starts from ``B = diag(1, 0.01)`` and
    ``G = diag(1, 0.001)``.  A strongly anisotropic ``B`` makes the
    ``tr(G) tr(B^-1 G B^-1)`` product dominate.  With ``search_steps > 0``,
    a seeded random local search lowers the normalized value
    ``form / |G|^2`` further while keeping ``B`` SPD.

    Returns
    -------
    B, G : ndarray
    value : float
    eta_ok : bool
        True if ``value + eta tr((B^-1 G)^2) < 0`` for every ``eta`` in
        ``[0, eta_max]``.
    """
    B = np.diag([1.0, 0.01])
    G = np.diag([1.0, 0.001])
    if search_steps:
        rng = np.random.default_rng(seed)

        def score(B, G):
            return float(peterlin_form(B, G)) / float(tc.frob2(G))

        best = score(B, G)
        step = 0.05
        for _ in range(search_steps):
            dB = tc.sym_part(rng.normal(size=(2, 2))) * step * 0.01
            dG = tc.sym_part(rng.normal(size=(2, 2))) * step
            Bn, Gn = B + dB, G + dG
            if tc.min_eigenvalue(Bn) <= 1e-3:
                continue
            sc = score(Bn, Gn)
            if sc < best:
                B, G, best = Bn, Gn, sc
    value = float(peterlin_form(B, G))
    term = float(peterlin_energy_term(B, G))
    etas = np.linspace(0.0, eta_max, n_eta)
    eta_ok = bool(np.all(value + etas * term < 0.0))
    return B, G, value, eta_ok
