"""Acceptance suite: one pass/fail line per criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v``; the criterion lines are
printed directly to the terminal (bypassing output capture) and repeated in
the summary at the end of the session.
"""

import math

import numpy as np
import pytest

from conftest import make_model
from envar import State
from envar import diagnostics as dg
from envar import tensor_core as tc
from envar.cli import main
from envar.grid import TestFunction
from envar.model_api import ModeForcing, check_adiss, check_convexity, check_fenchel
from envar.scheme import SchemeConfig, run

MODELS = ["model_q", "model_s", "model_llz"]
LOW_MODES = ModeForcing([{"kx": 1, "ky": 0, "amp": 0.5},
                         {"kx": 1, "ky": 1, "amp": 0.25, "omega": 2 * math.pi}])
RESULTS = {}


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}: {detail}"
        RESULTS[number] = line
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return emit


def minmax(model, tau, n_steps, U0):
    cfg = SchemeConfig(tau=tau, n_steps=n_steps,
                       test_basis=dg.default_test_basis(model, tau * n_steps))
    return run(model, cfg, U0), cfg


# 1 -----------------------------------------------------------------------
def test_c01_fenchel_suite(report):
    worst_rt = worst_gap = 0.0
    for name in MODELS:
        rec = check_fenchel(make_model(name, n=64), trials=200, seed=1)
        worst_rt = max(worst_rt, rec.extra["roundtrip"])
        worst_gap = max(worst_gap, rec.extra["fy_gap"])
    report(1, "Fenchel round trip and Fenchel-Young gap, 200 states x 3 models",
           worst_rt <= 1e-10 and worst_gap <= 1e-9,
           f"roundtrip {worst_rt:.2e} <= 1e-10, gap {worst_gap:.2e} <= 1e-9")


# 2 -----------------------------------------------------------------------
def test_c02_root_maps(report):
    rng = np.random.default_rng(2)
    worst = {}
    for d in (2, 3):
        I = np.eye(d)
        S = rng.normal(size=(500, d, d)) * rng.uniform(0.1, 5.0, size=(500, 1, 1))
        S = tc.sym_part(S)
        scale = 1 + np.max(np.abs(S), axis=(-2, -1))
        for beta in (0.1, 0.5, 0.9):
            B = tc.b_of_sigma(S, beta)
            rb = beta * B @ B - (S - (1 - 2 * beta) * I) @ B - (1 - beta) * I
            worst[f"B d={d} beta={beta}"] = float(np.max(np.max(np.abs(rb), axis=(-2, -1)) / scale))
        F = tc.f_of_sigma(S)
        rf = F @ F - S @ F - I
        worst[f"F d={d}"] = float(np.max(np.max(np.abs(rf), axis=(-2, -1)) / scale))
    w = max(worst.values())
    report(2, "root maps B(sigma), F(sigma), 500 symmetric sigma each, d in {2,3}",
           w <= 1e-11, f"worst relative matrix-quadratic residual {w:.2e} <= 1e-11")


# 3 -----------------------------------------------------------------------
def test_c03_adiss(report):
    detail, ok = [], True
    for name in MODELS:
        m = make_model(name, n=16)
        n = m.grid.n
        const = 0.0
        for sig in (np.eye(2), -0.7 * np.eye(2), np.diag([0.4, -0.3]),
                    np.array([[0.2, 0.5], [0.5, -0.1]])):
            phi = TestFunction(np.zeros((n, n, 2)), np.broadcast_to(sig, (n, n, 2, 2)).copy())
            const = max(const, check_adiss(m, 0.0, phi))
        res = []
        for n in (16, 32, 64):
            mm = make_model(name, n=n)
            res.append(max(check_adiss(mm, 0.0, mm.random_test_function([3, i], phi_amp=1.0,
                                                                       sigma_amp=1.0))
                           for i in range(5)))
        mono = all(res[i + 1] <= max(res[i], 1e-14) for i in range(2))
        ok_m = const <= 1e-12 and res[-1] <= 1e-8 and mono
        ok &= ok_m
        detail.append(f"{name} const {const:.1e}, n=16/32/64: "
                      + "/".join(f"{r:.1e}" for r in res))
    report(3, "Adiss identity (const <= 1e-12; n=64 <= 1e-8; monotone in n)", ok,
           "; ".join(detail))


# 4 -----------------------------------------------------------------------
def test_c04_convexity(report):
    worst = {}
    for name in MODELS:
        rec = check_convexity(make_model(name, n=32), 0.0, None, trials=1000, seed=4)
        worst[name] = rec.residual
    w = max(worst.values())
    report(4, "convexity midpoint test, 1000 random pairs per model", w <= 1e-9,
           ", ".join(f"{k} {v:.3f}" for k, v in worst.items()) + " (violation <= 1e-9 * scale)")


# 5 -----------------------------------------------------------------------
@pytest.mark.parametrize("name", ["model_llz", "model_s"])
def test_c05_energy_law(report, name):
    parts, ok = [], True
    for forcing in (None, LOW_MODES):
        m = make_model(name, n=32, forcing=forcing)
        traj, _ = minmax(m, 1 / 256, 256, m.random_state(5, v_amp=0.8, c_amp=0.4))
        slack = traj.energy_law_slack()
        tv = traj.tv_running()[-1]
        bound = traj.energies[0] + 2 * traj.tau * float(np.sum(traj.c_psi))
        ok &= slack <= 1e-12 and tv <= bound
        parts.append(f"{'forced' if forcing else 'f=0'}: slack {slack:.1e}, "
                     f"TV {tv:.4e} <= {bound:.4e}")
    key = 5 if name == "model_llz" else 5.1
    report(key, f"energy law and TV bound, 256 steps, {name}", ok, "; ".join(parts))


# 6 -----------------------------------------------------------------------
def test_c06_equilibrium(report):
    worst, e_max = 0.0, 0.0
    for name in MODELS:
        m = make_model(name, n=64)
        U0 = m.minimizer()
        traj, _ = minmax(m, 1 / 64, 100, U0)
        for U, E in zip(traj.states, traj.energies):
            worst = max(worst, (U - U0).max_abs())
            e_max = max(e_max, abs(E))
    report(6, "equilibrium fixed point, 100 min-max steps x 3 models",
           worst <= 1e-12 and e_max == 0.0, f"max drift {worst:.1e} <= 1e-12, max |E| {e_max}")


# 7 -----------------------------------------------------------------------
def test_c07_evi(report):
    m = make_model("model_llz", n=64, forcing=LOW_MODES)
    traj, cfg = minmax(m, 1 / 256, 256, m.random_state(7, v_amp=0.8, c_amp=0.5))
    rep = dg.evi_report(m, traj, cfg.test_basis, stride=8)
    extra = []
    ok = rep.passed
    for name in ("model_q", "model_s"):
        mm = make_model(name, n=32, forcing=LOW_MODES)
        tr, c = minmax(mm, 1 / 128, 64, mm.random_state(7, v_amp=0.8, c_amp=0.4))
        r = dg.evi_report(mm, tr, c.test_basis, stride=8)
        ok &= r.passed
        extra.append(f"{name} worst {r.worst:.1e} <= {r.tol:.1e}")
    report(7, "EVI over 24 test functions at stride 8", ok,
           f"model_llz n=64 tau=1/256: worst {rep.worst:.2e} <= {rep.tol:.2e} over "
           f"{rep.n_windows} windows; " + "; ".join(extra))


# 8 -----------------------------------------------------------------------
def test_c08_semiflow(report):
    ok, parts = True, []
    k, mm = 12, 12
    for name in MODELS:
        m = make_model(name, n=32, forcing=LOW_MODES)
        U0 = m.random_state(8, v_amp=0.8, c_amp=0.4)
        basis = dg.default_test_basis(m, (k + mm) / 128)
        full = run(m, SchemeConfig(1 / 128, k + mm, basis), U0)
        head = run(m, SchemeConfig(1 / 128, k, basis), U0)
        tail = run(m, SchemeConfig(1 / 128, mm, basis), head.states[-1], start_step=k,
                   E0=head.energies[-1])
        same = all(np.array_equal(full.states[k + j].v, tail.states[j].v)
                   and np.array_equal(full.states[k + j].C, tail.states[j].C)
                   and full.energies[k + j] == tail.energies[j] for j in range(mm + 1))
        ok &= same
        parts.append(f"{name} {'bitwise' if same else 'DIFFERS'}")
    report(8, f"semi-flow restart, {k}+{mm} steps vs restart at {k}", ok, ", ".join(parts))


# 9 -----------------------------------------------------------------------
def _manufactured(name, n):
    m0 = make_model(name, n=n) if name != "model_llz" else make_model(name, n=n, mu=0.05)
    if name == "model_llz":
        return m0, dg.taylor_green(m0.grid, m0.mu)
    B0 = dg.smooth_spd_field(m0.grid)
    sol = (dg.relaxation_solution_q if name == "model_q" else dg.relaxation_solution_s)(m0, B0)
    return make_model(name, n=n, forcing=sol.forcing), sol


def test_c09_gronwall(report):
    T = 0.25
    ok, parts = True, []
    for name in MODELS:
        RT = []
        for n in (16, 32, 64):
            m, sol = _manufactured(name, n)
            traj, _ = minmax(m, T / n, n, sol(0.0))
            ser = dg.gronwall_weak_strong(m, traj, sol, det_floor=1e-3)
            ok &= ser.passed
            RT.append(ser.R[-1])
        ratios = [RT[i] / RT[i + 1] for i in range(2)]
        ok &= min(ratios) >= 2
        parts.append(f"{name} R(T) " + "/".join(f"{r:.2e}" for r in RT)
                     + " ratios " + "/".join(f"{r:.2f}" for r in ratios))
    report(9, "weak-strong Gronwall bound and refinement ratio >= 2", ok, "; ".join(parts))


# 10 ----------------------------------------------------------------------
def test_c10_angular_velocity(report):
    rng = np.random.default_rng(10)
    res = skew = 0.0
    for _ in range(500):
        A = rng.normal(size=(3, 3))
        S = A @ A.T + 0.05 * np.eye(3)
        L = rng.normal(size=(3, 3))
        a, b = rng.normal(size=2)
        W = tc.angular_velocity_w(S, L, a, b)
        H = tc.skw_part(a * (L @ S - S @ L.T) + b * (L.T @ S - S @ L))
        res = max(res, float(np.max(np.abs(S @ W + W @ S - H))))
        skew = max(skew, float(np.max(np.abs(W + W.T))))
    L = rng.normal(size=(3, 3))
    W = tc.angular_velocity_w(np.eye(3), L, 0.3, 0.8)
    H = tc.skw_part(0.3 * (L - L.T) + 0.8 * (L.T - L))
    ident = float(np.max(np.abs(W - H / 2)))
    report(10, "angular velocity SW + WS = H, 500 triples", res <= 1e-10 and skew <= 1e-14
           and ident <= 1e-14,
           f"residual {res:.1e} <= 1e-10, skew {skew:.1e} <= 1e-14, S=I gap {ident:.1e}")


# 11 ----------------------------------------------------------------------
def test_c11_peterlin(report):
    B, G, value, eta_ok = dg.peterlin_nonconvexity_witness(eta_max=10.0, n_eta=1001)
    report(11, "Peterlin second-derivative form is not positive", value < -17 and eta_ok,
           f"value {value:.4f} < -17, negative for all eta in [0, 10]: {eta_ok}")


# 12 ----------------------------------------------------------------------
GOLDEN = """
[grid]
n = 32
[scheme]
tau = 0.00390625
n_steps = 64
seed = 12
[model_llz]
mu = 0.5
[forcing]
modes = [{kx = 1, ky = 0, amp = 0.5}, {kx = 1, ky = 1, amp = 0.2, omega = 6.0}]
[initial]
kind = "random"
seed = 12
[output]
dir = "unused"
"""


def test_c12_determinism(report, tmp_path, monkeypatch):
    cfg = tmp_path / "golden.toml"
    cfg.write_text(GOLDEN)
    codes = []
    for out in ("a", "b"):
        monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / out))
        codes.append(main(["run", "--config", str(cfg), "--quiet"]))
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("energy.csv", "diagnostics.csv"))
    report(12, "identical configs give byte-identical energy.csv and diagnostics.csv",
           same and codes == [0, 0], f"exit codes {codes}, byte-identical: {same}")


def test_zz_summary(capsys):
    with capsys.disabled():
        print("\n\nacceptance summary")
        for key in sorted(RESULTS):
            print(RESULTS[key])
    assert State is not None
