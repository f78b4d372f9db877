"""Command-line front end.

Subcommands::

    envar run --config run.toml [--quiet] [--threads N]
    envar check MODEL CHECK [--trials N] [--seed S] [--refine 16,32,64]
                [--n N] [--config run.toml] [--csv out.csv] [--threads N]
    envar compare A.toml B.toml [--out DIR] [--quiet] [--threads N]

Exit codes: 0 success, 1 check failure, 2 configuration error, 3 numerical
failure (lost positive definiteness or an uncertified saddle step).
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import diagnostics as dg
from . import tensor_core as tc
from .config import build_initial_state, build_model, load_config
from .errors import ConfigError, NotPositiveDefinite, NumericalFailure, OutsideDomain
from .model_api import check_adiss, check_convexity, check_fenchel, check_hessian
from .scheme import SchemeConfig, run
from .snapshot import write_field

__all__ = ["main", "EXIT_OK", "EXIT_FAIL", "EXIT_CONFIG", "EXIT_NUMERICAL"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

_DEFAULT_PARAMS = {
    "model_q": {"mu": 1.0, "alpha": 1.0, "beta": 0.5, "delta": 0.5},
    "model_s": {"mu": 1.0, "alpha": 1.0, "mu_p": 1.0},
    "model_llz": {"mu": 1.0},
}
_MODEL_CHECKS = ("fenchel", "adiss", "convexity", "hessian")
_OTHER_CHECKS = {"peterlin": ("witness",), "tensor": ("rootmap", "angular")}


# ------------------------------------------------------------------ output
def fmt(x):
    """Full-precision scientific notation (17 significant digits)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.16e}"
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(r[h]) for h in header])


_DIAG_HEADER = ["check", "model", "params", "residual", "tolerance", "pass"]


def _print_table(rows, quiet=False, stream=None):
    if quiet:
        return
    stream = stream or sys.stdout
    for r in rows:
        flag = "PASS" if r["pass"] else "FAIL"
        print(f"{flag}  {r['check']:<36} {r.get('model', ''):<10} "
              f"residual={float(r['residual']):.3e}  tol={float(r['tolerance']):.1e}",
              file=stream)


def _threads(arg, cfg=None):
    if arg is not None:
        return arg
    if cfg is not None and cfg.runtime["threads"]:
        return cfg.runtime["threads"]
    return os.cpu_count() or 1


# --------------------------------------------------------------------- run
def _scheme_config(cfg, model):
    s = cfg.scheme
    T = s["tau"] * s["n_steps"]
    basis = None
    if s["mode"] == "minmax":
        basis = dg.default_test_basis(model, T if T > 0 else 1.0,
                                      cfg.diagnostics["basis_amplitude"])
    return SchemeConfig(tau=s["tau"], n_steps=s["n_steps"], test_basis=basis,
                        inner_iters=s["inner_iters"], outer_iters=s["outer_iters"],
                        tol_saddle=s["tol_saddle"], seed=s["seed"],
                        lambda_max=s["lambda_max"]), basis


def _simulate(cfg):
    model = build_model(cfg)
    U0 = build_initial_state(cfg, model)
    scfg, basis = _scheme_config(cfg, model)
    scfg.validate_for(model)
    traj = run(model, scfg, U0, mode=cfg.scheme["mode"])
    return model, traj, basis


def _energy_rows(traj):
    tv = traj.tv_running()
    return [{"t": traj.times[i], "E": traj.energies[i],
             "energy_of_state": traj.state_energies[i],
             "dissipation": traj.dissipation[i], "c_psi": traj.c_psi[i],
             "tv_running": tv[i]} for i in range(len(traj))]


def _run_checks(cfg, model, traj, basis, threads):
    d = cfg.diagnostics
    rows = []
    name, params = model.name, ";".join(f"{k}={v:g}" for k, v in model.params_dict().items())

    def add(check, residual, tol, ok=None):
        rows.append({"check": check, "model": name, "params": params,
                     "residual": float(residual), "tolerance": float(tol),
                     "pass": bool(residual <= tol if ok is None else ok)})

    e0 = traj.energies[0]
    if d["energy_law"] and len(traj) > 1:
        add("energy_law", traj.energy_law_slack(), 1e-12)
    if d["tv_bound"]:
        bound = e0 + 2.0 * traj.tau * float(np.sum(traj.c_psi))
        add("tv_bound", traj.tv_running()[-1] - bound, 0.0)
    if d["bv"]:
        forced = not model.forcing.is_zero
        bv = dg.bv_postprocess(traj.energies, traj.c_psi, traj.tau, forced=forced,
                               tol=1e-13 * (1.0 + e0))
        if not forced:
            add("bv_identity", abs(bv["tv"] - (e0 - traj.energies[-1])),
                1e-12 * (1.0 + e0), bv["identity_ok"])
    if traj.mode == "minmax" and len(traj) > 1:
        worst_h = max(i.saddle for i in traj.info[1:])
        add("saddle_certificate", worst_h, 1e-8 * (1.0 + e0))
    if d["evi"] and basis and len(traj) > 1:
        rep = dg.evi_report(model, traj, basis, stride=d["evi_stride"], tol=d["evi_tol"],
                            rule=d["evi_rule"], threads=threads)
        for r in rep.rows():
            add(r["check"], r["residual"], r["tolerance"])
        add("evi_worst", rep.worst, rep.tol)
    return rows


def _write_snapshots(out, model, traj, every):
    if not every:
        return
    sd = os.path.join(out, "snapshots")
    os.makedirs(sd, exist_ok=True)
    ckind = "sym" if model.conf_kind == "sym" else "matrix"
    for i in range(0, len(traj), every):
        U = traj.states[i]
        write_field(os.path.join(sd, f"step_{i:06d}_v.fld"), model.grid, U.v, "vector")
        write_field(os.path.join(sd, f"step_{i:06d}_C.fld"), model.grid, U.C, ckind)


def cmd_run(args):
    cfg = load_config(args.config)
    threads = _threads(args.threads, cfg)
    model, traj, basis = _simulate(cfg)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    write_csv(os.path.join(out, "energy.csv"),
              ["t", "E", "energy_of_state", "dissipation", "c_psi", "tv_running"],
              _energy_rows(traj))
    _write_snapshots(out, model, traj, cfg.output["snapshot_every"])
    rows = _run_checks(cfg, model, traj, basis, threads)
    write_csv(os.path.join(out, "diagnostics.csv"), _DIAG_HEADER, rows)
    _print_table(rows, args.quiet)
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_FAIL


# ------------------------------------------------------------------- check
def _model_for_check(name, n, cfg_path):
    from .config import parse_config

    if cfg_path:
        cfg = load_config(cfg_path)
        if cfg.model_name != name:
            raise ConfigError(f"--config describes {cfg.model_name}, not {name}")
    else:
        cfg = parse_config({"grid": {"n": n}, name: dict(_DEFAULT_PARAMS[name]),
                            "scheme": {"tau": 0.01, "n_steps": 0}})
    if n is not None:
        cfg.grid["n"] = n
    return build_model(cfg)


def _check_rows_model(args):
    rows = []
    if args.check == "adiss":
        ns = [int(x) for x in args.refine.split(",")] if args.refine else [args.n or 64]
        prev = None
        for n in ns:
            model = _model_for_check(args.model, n, args.config)
            worst = 0.0
            for i in range(args.trials or 5):
                phi = model.random_test_function([args.seed, i], k_max=3, phi_amp=1.0,
                                                 sigma_amp=1.0)
                worst = max(worst, check_adiss(model, 0.0, phi))
            tol = 1e-8 if n >= 64 else math.inf
            ok = worst <= tol and (prev is None or worst <= max(prev, 1e-14))
            rows.append({"check": f"adiss[n={n}]", "model": model.name,
                         "params": _params(model), "residual": worst, "tolerance": tol,
                         "pass": ok})
            prev = worst
        return rows
    model = _model_for_check(args.model, args.n or 32, args.config)
    threads = args.threads
    if args.check == "fenchel":
        rec = check_fenchel(model, trials=args.trials or 200, seed=args.seed, threads=threads)
    elif args.check == "convexity":
        rec = check_convexity(model, 0.0, None, trials=args.trials or 1000, seed=args.seed,
                              threads=threads)
    else:
        rec = check_hessian(model, trials=args.trials or 5, seed=args.seed)
    return [rec.as_row()]


def _params(model):
    return ";".join(f"{k}={v:g}" for k, v in model.params_dict().items())


def _check_rows_other(args):
    if args.model == "peterlin":
        B, G, value, eta_ok = dg.peterlin_nonconvexity_witness()
        if not args.quiet:
            print(f"B = {B.tolist()}\nG = {G.tolist()}\nvalue = {value:.6f}")
        return [{"check": "peterlin_witness", "model": "peterlin", "params": "",
                 "residual": value, "tolerance": -17.0, "pass": value < -17.0},
                {"check": "peterlin_eta_sweep", "model": "peterlin", "params": "eta<=10",
                 "residual": float(not eta_ok), "tolerance": 0.0, "pass": eta_ok}]
    rng = np.random.default_rng(args.seed)
    trials = args.trials or 500
    rows = []
    if args.check == "rootmap":
        for d in (2, 3):
            worst_b = worst_f = 0.0
            beta = 0.5
            for _ in range(trials):
                S = tc.sym_part(rng.normal(size=(d, d)) * rng.uniform(0.1, 3.0))
                B = tc.b_of_sigma(S, beta)
                I = np.eye(d)
                rb = beta * B @ B - (S - (1 - 2 * beta) * I) @ B - (1 - beta) * I
                F = tc.f_of_sigma(S)
                rf = F @ F - S @ F - I
                worst_b = max(worst_b, float(np.max(np.abs(rb))) / (1 + float(np.max(np.abs(S)))))
                worst_f = max(worst_f, float(np.max(np.abs(rf))) / (1 + float(np.max(np.abs(S)))))
            for lab, v in (("B", worst_b), ("F", worst_f)):
                rows.append({"check": f"rootmap_{lab}[d={d}]", "model": "tensor", "params": "",
                             "residual": v, "tolerance": 1e-11, "pass": v <= 1e-11})
        return rows
    worst = 0.0
    for _ in range(trials):
        d = 3
        A = rng.normal(size=(d, d))
        S = A @ A.T + 0.1 * np.eye(d)
        L = rng.normal(size=(d, d))
        a, b = rng.normal(size=2)
        W = tc.angular_velocity_w(S, L, a, b)
        H = tc.skw_part(a * (L @ S - S @ L.T) + b * (L.T @ S - S @ L))
        worst = max(worst, float(np.max(np.abs(S @ W + W @ S - H))) / (1 + float(np.max(np.abs(H)))))
    return [{"check": "angular_velocity[d=3]", "model": "tensor", "params": "",
             "residual": worst, "tolerance": 1e-10, "pass": worst <= 1e-10}]


def cmd_check(args):
    if args.model in _DEFAULT_PARAMS:
        if args.check not in _MODEL_CHECKS:
            raise ConfigError(f"check {args.check!r} is not available for {args.model} "
                              f"(valid: {', '.join(_MODEL_CHECKS)})")
        rows = _check_rows_model(args)
    elif args.model in _OTHER_CHECKS:
        if args.check not in _OTHER_CHECKS[args.model]:
            raise ConfigError(f"check {args.check!r} is not available for {args.model} "
                              f"(valid: {', '.join(_OTHER_CHECKS[args.model])})")
        rows = _check_rows_other(args)
    else:
        raise ConfigError(f"unknown model {args.model!r}")
    _print_table(rows, args.quiet)
    if args.csv:
        write_csv(args.csv, _DIAG_HEADER, rows)
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_FAIL


# ----------------------------------------------------------------- compare
def cmd_compare(args):
    ca, cb = load_config(args.config_a), load_config(args.config_b)
    for sec, keys in (("grid", ("n", "L")), ("scheme", ("tau", "n_steps"))):
        for k in keys:
            if getattr(ca, sec)[k] != getattr(cb, sec)[k]:
                raise ConfigError(f"{sec}.{k} differs between the two runs "
                                  f"({getattr(ca, sec)[k]!r} vs {getattr(cb, sec)[k]!r})")
    if ca.model_name != cb.model_name or ca.model != cb.model:
        raise ConfigError("the two runs must use the same model and parameters")
    model, traj_a, _ = _simulate(ca)
    _, traj_b, _ = _simulate(cb)
    out = args.out or ca.output_dir
    os.makedirs(out, exist_ok=True)
    try:
        series = dg.gronwall_weak_strong(model, traj_a, traj_b)
    except dg.GateRefused as err:
        print(f"compare refused: {err}", file=sys.stderr)
        return EXIT_FAIL
    write_csv(os.path.join(out, "relenergy.csv"),
              ["t", "R", "W", "K", "envelope", "budget"], series.rows())
    row = {"check": "gronwall", "model": model.name, "params": _params(model),
           "residual": float(np.max(series.R - series.bound)), "tolerance": 0.0,
           "pass": series.passed}
    write_csv(os.path.join(out, "diagnostics.csv"), _DIAG_HEADER, [row])
    _print_table([row], args.quiet)
    return EXIT_OK if series.passed else EXIT_FAIL


# -------------------------------------------------------------------- main
def build_parser():
    p = argparse.ArgumentParser(prog="envar", description="Energy-variational solver and verifier")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the scheme and its diagnostics")
    r.add_argument("--config", required=True)
    r.add_argument("--quiet", action="store_true")
    r.add_argument("--threads", type=int)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="run a standalone checker")
    c.add_argument("model", help="model_q, model_s, model_llz, peterlin or tensor")
    c.add_argument("check", help="fenchel, adiss, convexity, hessian, witness, rootmap, angular")
    c.add_argument("--trials", type=int)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--refine", help="comma-separated grid sizes for adiss")
    c.add_argument("--n", type=int)
    c.add_argument("--config")
    c.add_argument("--csv")
    c.add_argument("--quiet", action="store_true")
    c.add_argument("--threads", type=int)
    c.set_defaults(func=cmd_check)

    m = sub.add_parser("compare", help="relative energy of run A against reference run B")
    m.add_argument("config_a")
    m.add_argument("config_b")
    m.add_argument("--out")
    m.add_argument("--quiet", action="store_true")
    m.add_argument("--threads", type=int)
    m.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, NotPositiveDefinite, OutsideDomain) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
