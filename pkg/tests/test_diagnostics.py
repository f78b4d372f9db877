import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_model
from envar import State
from envar import diagnostics as dg
from envar import tensor_core as tc
from envar.errors import Misaligned
from envar.grid import TestFunction
from envar.model_api import ModeForcing, pairing
from envar.scheme import SchemeConfig, run, zero_test_function


def minmax_run(model, n_steps=16, tau=1 / 64, U0=None, seed=7):
    cfg = SchemeConfig(tau=tau, n_steps=n_steps,
                       test_basis=dg.default_test_basis(model, tau * n_steps))
    U0 = model.random_state(seed, v_amp=0.8, c_amp=0.4) if U0 is None else U0
    return run(model, cfg, U0), cfg


# ---------------------------------------------------------------- basis
def test_default_basis_shape(model):
    basis = dg.default_test_basis(model, 1.0)
    assert len(basis) == 24
    labels = [b.label for b in basis]
    assert len(set(labels)) == 24
    g = model.grid
    for b in basis[:8]:
        assert np.max(np.abs(g.div(b.phi))) < 1e-12
        np.testing.assert_allclose(g.project_velocity(b.phi), b.phi, atol=1e-12)
        assert not np.any(b.sigma)
    for b in basis[8:16]:
        assert not np.any(b.phi)
        if model.conf_kind == "sym":
            np.testing.assert_array_equal(b.sigma, np.swapaxes(b.sigma, -1, -2))
    assert {"sig_I", "sig_-I"} <= set(labels)
    assert all(b.is_time_dependent for b in basis[16:])
    assert basis[16].c(1.0) == pytest.approx(-1.0)


def test_default_basis_band_limited_for_llz():
    m = make_model("model_llz")
    for b in dg.default_test_basis(m, 1.0):
        np.testing.assert_allclose(m.grid.dealias(b.sigma), b.sigma, atol=1e-13)


# ------------------------------------------------------------------ EVI
def test_evi_zero_test_function_is_energy_inequality(model):
    traj, cfg = minmax_run(model, n_steps=8)
    zero = zero_test_function(model.grid)
    lhs = dg.evi_residual(model, traj, zero, traj.times[2], traj.times[7])
    expected = traj.energies[7] - traj.energies[2] + cfg.tau * sum(traj.dissipation[3:8])
    assert lhs == pytest.approx(expected, abs=1e-14)
    assert lhs <= 1e-12


def test_evi_misaligned():
    m = make_model("model_llz")
    traj, _ = minmax_run(m, n_steps=4)
    zero = zero_test_function(m.grid)
    with pytest.raises(Misaligned):
        dg.evi_residual(m, traj, zero, 0.001, traj.times[-1])
    with pytest.raises(Misaligned):
        dg.evi_residual(m, traj, zero, traj.times[2], traj.times[2])
    with pytest.raises(ValueError):
        dg.evi_increments(m, traj, zero, rule="simpson")


def test_evi_equilibrium_nonpositive(model):
    traj, _ = minmax_run(model, n_steps=8, U0=model.minimizer())
    rep = dg.evi_report(model, traj, dg.default_test_basis(model, 1.0), stride=2)
    assert rep.worst <= 1e-14
    # the trapezoid rule integrates c'(t) <U, Phi> only up to O(tau^2)
    rep_t = dg.evi_report(model, traj, dg.default_test_basis(model, 1.0), stride=2,
                          rule="trapezoid")
    assert rep_t.worst <= (1 / 64) ** 2 * np.pi ** 2


@pytest.mark.parametrize("name", ["model_q", "model_s", "model_llz"])
def test_evi_minmax_trajectory(name):
    m = make_model(name, forcing=ModeForcing([{"kx": 1, "ky": 0, "amp": 0.5}]))
    traj, cfg = minmax_run(m, n_steps=24)
    rep = dg.evi_report(m, traj, cfg.test_basis, stride=8)
    assert rep.n_windows == 6
    assert rep.passed, (rep.worst, rep.worst_label)
    assert len(rep.rows()) == 24


def test_evi_window_sums_match_direct_evaluation():
    m = make_model("model_s")
    traj, cfg = minmax_run(m, n_steps=12)
    phi = cfg.test_basis[18]
    d = dg.evi_increments(m, traj, phi)
    direct = dg.evi_residual(m, traj, phi, traj.times[3], traj.times[11])
    assert direct == pytest.approx(float(np.sum(d[4:12])), abs=1e-15)


def test_evi_trapezoid_rule_converges():
    # time-quadrature inconsistency of the trapezoid rule shrinks with tau
    vals = []
    for n_steps in (8, 16):
        m = make_model("model_llz")
        traj, cfg = minmax_run(m, n_steps=n_steps, tau=0.25 / n_steps)
        rep = dg.evi_report(m, traj, cfg.test_basis, stride=n_steps, rule="trapezoid")
        vals.append(rep.worst)
    assert vals[1] < vals[0]


# ----------------------------------------------------------- weak probe
def _tg_probe(n, tau, n_steps, rule):
    m = make_model("model_llz", n=n)
    tg = dg.taylor_green(m.grid, m.mu, 0.5, m.conf_minimizer())
    theta = TestFunction(2 * tg(0.0).v, m.grid.dealias(m.random_test_function(3).sigma))
    traj = run(m, SchemeConfig(tau=tau, n_steps=n_steps), tg(0.0), mode="baseline")
    return dg.weak_solution_probe(m, traj, theta, rule=rule)


def test_weak_probe_equilibrium():
    m = make_model("model_q")
    traj, _ = minmax_run(m, n_steps=4, U0=m.minimizer())
    out = dg.weak_solution_probe(m, traj, m.random_test_function(1))
    assert out["residual"] == 0.0 and out["gap"] <= 0.0 and out["spread"] == 0.0


def test_weak_probe_alpha_independent_and_first_order():
    coarse = _tg_probe(16, 1 / 64, 16, "trapezoid")
    fine = _tg_probe(32, 1 / 128, 32, "trapezoid")
    assert coarse["spread"] < 0.1 and fine["spread"] < 0.1
    assert abs(fine["residual"]) == pytest.approx(0.5 * abs(coarse["residual"]), rel=0.05)
    assert fine["gap"] < coarse["gap"]


def test_weak_probe_prolongation_rule_exact():
    out = _tg_probe(16, 1 / 64, 16, "prolongation")
    assert abs(out["residual"]) < 1e-13


# ------------------------------------------------------- relative energy
def test_relative_energy_q_forms_agree():
    m = make_model("model_q", beta=0.3, delta=0.8)
    for i in range(5):
        s = m.random_state([i, 1], v_amp=1.0, c_amp=0.8)
        st_ = m.random_state([i, 2], v_amp=1.0, c_amp=0.8)
        E = m.energy(s) + 0.1 * i
        a = dg.relative_energy_q(m, s, E, st_)
        b = dg.relative_energy(m, s, E, st_)
        assert a == pytest.approx(b, abs=1e-10)
        assert a >= 0


def test_relative_energy_identities():
    m = make_model("model_q")
    s = m.random_state(3)
    assert dg.relative_energy_q(m, s, m.energy(s), s) == pytest.approx(0.0, abs=1e-14)
    assert dg.relative_energy_q(m, s, m.energy(s) + 0.25, s) == pytest.approx(0.25, abs=1e-14)


def test_relative_energy_nonnegative(model):
    for i in range(4):
        s = model.random_state([i, 3], v_amp=1.0, c_amp=0.7)
        st_ = model.random_state([i, 4], v_amp=1.0, c_amp=0.7)
        assert dg.relative_energy(model, s, model.energy(s), st_) >= -1e-14


# --------------------------------------------------- relative dissipation
def test_relative_dissipation_zero_on_diagonal(model):
    s = model.random_state(2)
    assert dg.relative_dissipation(model, s, s) == 0.0
    if model.name == "model_q":
        assert dg.relative_dissipation_q(model, s, s) == pytest.approx(0.0, abs=1e-13)


@pytest.mark.parametrize("params", [dict(), dict(beta=0.2, delta=2.0, alpha=-0.7, mu=2.0)])
def test_relative_dissipation_q_two_routes(params):
    m = make_model("model_q", n=32, **params)
    for i in range(3):
        s = m.random_state([i, 5], v_amp=0.8, c_amp=0.5)
        st_ = m.random_state([i, 6], v_amp=0.8, c_amp=0.5)
        a = dg.relative_dissipation_q(m, s, st_)
        b = dg.relative_dissipation(m, s, st_)
        assert a == pytest.approx(b, abs=1e-8 * (1 + abs(a)))
        assert a >= -1e-9 * (1 + abs(a))


def test_relative_dissipation_q_commuting_case():
    m = make_model("model_q", n=8, beta=0.4, delta=0.6)
    beta, delta = 0.4, 0.6
    bt = np.array([1.5, 0.7])
    c = 1.3
    n = 8
    Bt = np.broadcast_to(np.diag(bt), (n, n, 2, 2)).copy()
    s = State(np.zeros((n, n, 2)), c * Bt)
    st_ = State(np.zeros((n, n, 2)), Bt)
    # per-eigenvalue hand formula
    b = bt
    e = (c - 1) * b
    sig = (1 - beta) * (1 - 1 / b) + beta * (b - 1)
    dens = ((1 - beta) * (1 / (c * b) - 2 / b + c / b)
            + (beta + delta * (1 - beta)) * e ** 2
            + delta * beta * (c * b + 2 * b - 2) * e ** 2
            - delta * e ** 2 * sig)
    breg = 0.5 * beta * e ** 2 + (1 - beta) * (c - 1 - np.log(c))
    k = m.reg_weight_k(TestFunction(np.zeros((n, n, 2)), np.broadcast_to(np.diag(sig), Bt.shape)))
    expected = dens.sum() + k * breg.sum()
    assert dg.relative_dissipation_q(m, s, st_) == pytest.approx(expected, rel=1e-12)


def test_confirm_relative_dissipation(model):
    st_ = model.random_state(9, v_amp=0.5, c_amp=0.4)
    rec = dg.confirm_relative_dissipation(model, st_, trials=10)
    assert rec.residual <= 1e-9


# --------------------------------------------------- manufactured solutions
def _time_residual(model, sol, t, dt=1e-4):
    dU = (sol(t + dt) - sol(t - dt)).scale(1 / (2 * dt))
    f = None if sol.forcing is None else model.grid.project_velocity(sol.forcing(model.grid, t))
    R = model.representer(sol(t), f)
    return (dU + R).max_abs()


def test_taylor_green_is_exact():
    m = make_model("model_llz", n=16, mu=0.05)
    sol = dg.taylor_green(m.grid, m.mu, 0.7, m.conf_minimizer())
    assert _time_residual(m, sol, 0.3) < 1e-7


def test_relaxation_solution_q_is_exact():
    m = make_model("model_q", n=16, delta=0.7)
    sol = dg.relaxation_solution_q(m, dg.smooth_spd_field(m.grid, 0.5))
    mq = make_model("model_q", n=16, delta=0.7, forcing=sol.forcing)
    assert _time_residual(mq, sol, 0.2) < 1e-7


def test_relaxation_solution_s_is_exact():
    m = make_model("model_s", n=16, mu_p=0.5)
    sol = dg.relaxation_solution_s(m, dg.smooth_spd_field(m.grid, 0.5))
    ms = make_model("model_s", n=16, mu_p=0.5, forcing=sol.forcing)
    assert _time_residual(ms, sol, 0.2) < 1e-7


def test_smooth_spd_field_floor():
    from envar import GridSpec
    for a in (0.1, 0.4, 0.7):
        C = dg.smooth_spd_field(GridSpec(32), a)
        assert np.min(tc.min_eigenvalue(C)) >= 1 - 1.3 * a - 1e-12


# ------------------------------------------------------------- Gronwall
def test_gronwall_equilibrium(model):
    traj, _ = minmax_run(model, n_steps=6, U0=model.minimizer())
    rep = dg.gronwall_weak_strong(model, traj, lambda t: model.minimizer())
    assert np.all(rep.R == 0.0) and rep.passed
    assert len(rep.rows()) == 7


def test_gronwall_manufactured_q():
    m0 = make_model("model_q", n=16)
    sol = dg.relaxation_solution_q(m0, dg.smooth_spd_field(m0.grid, 0.4))
    m = make_model("model_q", n=16, forcing=sol.forcing)
    traj, _ = minmax_run(m, n_steps=16, tau=1 / 32, U0=sol(0.0))
    rep = dg.gronwall_weak_strong(m, traj, sol)
    assert rep.passed
    assert rep.R[0] == 0.0
    assert np.all(rep.W >= -1e-9)


def test_gronwall_gate_refuses():
    m = make_model("model_q", n=16)
    bad = dg.smooth_spd_field(m.grid, 0.876)  # min det ~ 6e-4
    traj, _ = minmax_run(m, n_steps=2, U0=m.minimizer())
    with pytest.raises(dg.GateRefused, match="regularity gate"):
        dg.gronwall_weak_strong(m, traj, lambda t: State(np.zeros((16, 16, 2)), bad))


# ------------------------------------------------------------------- BV
def test_bv_monotone():
    out = dg.bv_postprocess([3.0, 2.0, 2.0, 0.5])
    assert out["tv"] == 2.5 and out["monotone"] and out["identity_ok"]


def test_bv_upward_jump_flagged():
    out = dg.bv_postprocess([3.0, 2.0, 2.5, 1.0])
    assert out["jumps"] == [2]
    assert not out["monotone"] and not out["identity_ok"]


def test_bv_forced_bound():
    out = dg.bv_postprocess([1.0, 1.2, 1.1], c_psi=[0.0, 3.0, 3.0], tau=0.1)
    assert "identity_ok" not in out
    assert out["tv"] == pytest.approx(0.3)
    assert out["tv_bound"] == pytest.approx(2.2) and out["bound_ok"]


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30), st.data())
def test_bv_subsequence_tv(series, data):
    idx = sorted(data.draw(st.sets(st.integers(0, len(series) - 1), min_size=1)))
    sub = [series[i] for i in idx]
    assert dg.bv_postprocess(sub)["tv"] <= dg.bv_postprocess(series)["tv"] * (1 + 1e-12) + 1e-9


# ------------------------------------------------------------- Peterlin
def test_peterlin_witness_value():
    B, G, value, eta_ok = dg.peterlin_nonconvexity_witness()
    assert value == pytest.approx(-2 * 1.001 * 11 + 2 * 1.01 * 2, rel=1e-13)
    assert value < -17 and eta_ok
    assert float(dg.peterlin_energy_term(B, G)) == pytest.approx(1.01)


def test_peterlin_local_search_keeps_witness():
    B, G, value, eta_ok = dg.peterlin_nonconvexity_witness(search_steps=200, seed=1)
    assert value < 0 and eta_ok and tc.is_spd(B)


@given(st.floats(0.1, 10.0), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_peterlin_isotropic_never_witness(t, g):
    G = np.array([[g[0], g[1]], [g[1], g[2]]])
    val = float(dg.peterlin_form(t * np.eye(2), G))
    ref = 2 / t ** 2 * (2 * np.sum(G * G) - np.trace(G) ** 2)
    assert val == pytest.approx(ref, rel=1e-10, abs=1e-10)
    assert val >= -1e-10


def test_pairing_helper_symmetry():
    m = make_model("model_s")
    s = m.random_state(1)
    z = m.subdiff_energy(m.random_state(2))
    assert pairing(m.grid, z, s) == pytest.approx(
        m.grid.inner(z.w, s.v) + m.grid.inner(z.sigma, s.C))
