"""Run configuration: TOML sections, validation and object construction.

Sections::

    [grid]        n, L
    [scheme]      tau, n_steps, mode, tol_saddle, inner_iters, outer_iters,
                  seed, lambda_max
    [model_q]     mu, alpha, beta, delta, include_relaxation_weight
    [model_s]     mu, alpha, mu_p
    [model_llz]   mu
    [forcing]     modes = [{kx, ky, amp, omega, phase}, ...]
    [initial]     kind, seed, k_max, v_amp, c_amp, perturb
    [output]      dir, snapshot_every
    [runtime]     threads
    [diagnostics] energy_law, tv_bound, bv, evi, evi_stride, evi_rule,
                  evi_tol, basis_amplitude

Exactly one ``model_*`` section is required.  Unknown sections and keys
are rejected with :class:`ConfigError`.  The error names the offending key
and, for out-of-range values, the valid range.  The only environment
override is ``OUTPUT_DIR``, which replaces ``output.dir``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

import numpy as np

from .errors import ConfigError

__all__ = ["RunConfig", "load_config", "parse_config", "build_model", "build_initial_state"]

_INF = math.inf

# key -> (type, default, lower, upper, lower_open, upper_open)
_NUM = "num"
_INT = "int"
_STR = "str"
_BOOL = "bool"

_SCHEMA = {
    "grid": {
        "n": (_INT, 32, 8, _INF, False, True),
        "L": (_NUM, 1.0, 0.0, _INF, True, True),
    },
    "scheme": {
        "tau": (_NUM, None, 0.0, _INF, True, True),
        "n_steps": (_INT, None, 0, _INF, False, True),
        "mode": (_STR, "minmax", ("minmax", "baseline")),
        "tol_saddle": (_NUM, None, 0.0, _INF, True, True),
        "inner_iters": (_INT, 200, 1, _INF, False, True),
        "outer_iters": (_INT, 40, 1, _INF, False, True),
        "seed": (_INT, 0, 0, _INF, False, True),
        "lambda_max": (_NUM, 1e4, 0.0, _INF, True, True),
    },
    "model_q": {
        "mu": (_NUM, None, 0.0, _INF, True, True),
        "alpha": (_NUM, 1.0, -_INF, _INF, True, True),
        "beta": (_NUM, None, 0.0, 1.0, True, True),
        "delta": (_NUM, None, 0.0, _INF, True, True),
        "include_relaxation_weight": (_BOOL, True),
    },
    "model_s": {
        "mu": (_NUM, None, 0.0, _INF, True, True),
        "alpha": (_NUM, 1.0, -_INF, _INF, True, True),
        "mu_p": (_NUM, None, 0.0, _INF, True, True),
    },
    "model_llz": {
        "mu": (_NUM, None, 0.0, _INF, True, True),
    },
    "forcing": {
        "modes": ("modes", []),
    },
    "initial": {
        "kind": (_STR, "random", ("equilibrium", "random", "taylor_green", "relaxation")),
        "seed": (_INT, 0, 0, _INF, False, True),
        "k_max": (_INT, 3, 1, _INF, False, True),
        "v_amp": (_NUM, 0.5, 0.0, _INF, False, True),
        "c_amp": (_NUM, 0.3, 0.0, 1.0, False, True),
        "perturb": (_NUM, 0.0, 0.0, _INF, False, True),
    },
    "output": {
        "dir": (_STR, "out", None),
        "snapshot_every": (_INT, 0, 0, _INF, False, True),
    },
    "runtime": {
        "threads": (_INT, 0, 0, _INF, False, True),
    },
    "diagnostics": {
        "energy_law": (_BOOL, None),
        "tv_bound": (_BOOL, True),
        "bv": (_BOOL, True),
        "evi": (_BOOL, None),
        "evi_stride": (_INT, 8, 1, _INF, False, True),
        "evi_rule": (_STR, "prolongation", ("prolongation", "trapezoid")),
        "evi_tol": (_NUM, None, 0.0, _INF, True, True),
        "basis_amplitude": (_NUM, 1.0, 0.0, _INF, True, True),
    },
}

_MODELS = ("model_q", "model_s", "model_llz")
_MODE_KEYS = {"kx": _INT, "ky": _INT, "amp": _NUM, "omega": _NUM, "phase": _NUM}


def _range_text(lo, hi, lo_open, hi_open):
    left = "(" if lo_open else "["
    right = ")" if hi_open else "]"
    return f"{left}{lo:g}, {hi:g}{right}"


def _check_value(section, key, spec, value):
    name = f"{section}.{key}"
    kind = spec[0]
    if kind == _BOOL:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false, got {value!r}")
        return value
    if kind == _STR:
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string, got {value!r}")
        choices = spec[2]
        if choices is not None and value not in choices:
            raise ConfigError(f"{name} = {value!r} is not one of {', '.join(choices)}")
        return value
    if kind == "modes":
        return _check_modes(name, value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if kind == _INT:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    lo, hi, lo_open, hi_open = spec[2:6]
    ok = math.isfinite(value) and (value > lo if lo_open else value >= lo) \
        and (value < hi if hi_open else value <= hi)
    if not ok:
        raise ConfigError(f"{name} = {value!r} is outside the valid range "
                          f"{_range_text(lo, hi, lo_open, hi_open)}")
    return value


def _check_modes(name, modes):
    if not isinstance(modes, list):
        raise ConfigError(f"{name} must be a list of tables")
    out = []
    for i, m in enumerate(modes):
        if not isinstance(m, dict):
            raise ConfigError(f"{name}[{i}] must be a table")
        unknown = set(m) - set(_MODE_KEYS)
        if unknown:
            raise ConfigError(f"unknown key {name}[{i}].{sorted(unknown)[0]} "
                              f"(valid: {', '.join(_MODE_KEYS)})")
        for req in ("kx", "ky", "amp"):
            if req not in m:
                raise ConfigError(f"{name}[{i}].{req} is required")
        entry = {}
        for k, v in m.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{name}[{i}].{k} must be a number, got {v!r}")
            if _MODE_KEYS[k] == _INT and float(v) != int(v):
                raise ConfigError(f"{name}[{i}].{k} must be an integer, got {v!r}")
            entry[k] = int(v) if _MODE_KEYS[k] == _INT else float(v)
        if entry["kx"] == 0 and entry["ky"] == 0:
            raise ConfigError(f"{name}[{i}]: mode (0, 0) is not allowed")
        out.append(entry)
    return out


@dataclass
class RunConfig:
    """Validated configuration of one run."""

    grid: dict
    scheme: dict
    model_name: str
    model: dict
    forcing: dict
    initial: dict
    output: dict
    runtime: dict
    diagnostics: dict
    source: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def output_dir(self):
        return os.environ.get("OUTPUT_DIR") or self.output["dir"]


def parse_config(data, source="<memory>"):
    """Validate a parsed TOML mapping and fill defaults."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table of sections")
    unknown = [s for s in data if s not in _SCHEMA]
    if unknown:
        raise ConfigError(f"unknown section [{unknown[0]}] (valid: {', '.join(_SCHEMA)})")
    models = [m for m in _MODELS if m in data]
    if len(models) != 1:
        raise ConfigError(f"exactly one of [{'], ['.join(_MODELS)}] is required, "
                          f"found {len(models)}")
    out = {}
    for section, keys in _SCHEMA.items():
        if section in _MODELS and section != models[0]:
            continue
        given = data.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{section}] must be a table")
        bad = [k for k in given if k not in keys]
        if bad:
            raise ConfigError(f"unknown key {section}.{bad[0]} (valid: {', '.join(keys)})")
        vals = {}
        for key, spec in keys.items():
            default = spec[1]
            if key in given:
                vals[key] = _check_value(section, key, spec, given[key])
            elif default is None and section != "diagnostics" and key != "tol_saddle" \
                    and key != "evi_tol":
                raise ConfigError(f"{section}.{key} is required")
            else:
                vals[key] = default
        out[section] = vals
    g = out["grid"]
    if g["n"] & (g["n"] - 1):
        raise ConfigError(f"grid.n = {g['n']} must be a power of two >= 8")
    if out[models[0]].get("alpha", 1.0) == 0:
        raise ConfigError(f"{models[0]}.alpha must be nonzero")
    diag = out["diagnostics"]
    minmax = out["scheme"]["mode"] == "minmax"
    if diag["energy_law"] is None:
        diag["energy_law"] = minmax
    if diag["evi"] is None:
        diag["evi"] = minmax
    return RunConfig(out["grid"], out["scheme"], models[0], out[models[0]], out["forcing"],
                     out["initial"], out["output"], out["runtime"], diag, source, data)


def load_config(path):
    """Read and validate a TOML configuration file."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: malformed TOML: {err}") from None
    return parse_config(data, str(path))


def build_model(cfg, forcing=None):
    """Construct the grid and the model named in ``cfg``."""
    from .grid import GridSpec
    from .model_api import ModeForcing
    from .model_llz import ModelLLZ, ParamsLLZ
    from .model_q import ModelQ, ParamsQ
    from .model_s import ModelS, ParamsS

    grid = GridSpec(cfg.grid["n"], cfg.grid["L"])
    if forcing is None and cfg.forcing["modes"]:
        forcing = ModeForcing(cfg.forcing["modes"])
        for m in forcing.modes:
            if max(abs(m.kx), abs(m.ky)) >= grid.n / 3:
                raise ConfigError(f"forcing mode ({m.kx}, {m.ky}) is outside the resolved "
                                  f"band |k| < {grid.n / 3:.3g}")
    p = dict(cfg.model)
    if cfg.model_name == "model_q":
        irw = p.pop("include_relaxation_weight")
        return ModelQ(grid, ParamsQ(**p), forcing, include_relaxation_weight=irw)
    if cfg.model_name == "model_s":
        return ModelS(grid, ParamsS(**p), forcing)
    return ModelLLZ(grid, ParamsLLZ(**p), forcing)


def build_initial_state(cfg, model):
    """Initial state named by ``[initial] kind`` (optionally perturbed)."""
    from .diagnostics import smooth_spd_field, taylor_green
    from .grid import random_smooth_field
    from .model_api import State

    ini = cfg.initial
    g = model.grid
    kind = ini["kind"]
    if ini["k_max"] >= g.n / 3:
        raise ConfigError(f"initial.k_max = {ini['k_max']} must be below n/3 = {g.n / 3:.3g}")
    if kind == "equilibrium":
        U = model.minimizer()
    elif kind == "random":
        U = model.random_state(ini["seed"], k_max=ini["k_max"], v_amp=ini["v_amp"],
                               c_amp=ini["c_amp"])
    elif kind == "taylor_green":
        conf = model.conf_minimizer()
        U = taylor_green(g, model.mu, ini["v_amp"], conf)(0.0)
    else:
        if model.conf_kind != "sym":
            raise ConfigError("initial.kind = 'relaxation' needs an SPD model (model_q, model_s)")
        U = State(np.zeros((g.n, g.n, 2)), smooth_spd_field(g, ini["c_amp"]))
        if not model.conf_in_domain(U.C):
            raise ConfigError(f"initial.c_amp = {ini['c_amp']!r} makes the relaxation "
                              "field leave the SPD cone; use a smaller value")
    if ini["perturb"] > 0:
        ss = np.random.SeedSequence([ini["seed"], 7])
        s1, s2 = (int(x) for x in ss.generate_state(2))
        dv = g.project_velocity(random_smooth_field(g, s1, ini["k_max"], "vector", ini["perturb"]))
        kindc = "sym" if model.conf_kind == "sym" else "matrix"
        dC = random_smooth_field(g, s2, ini["k_max"], kindc, ini["perturb"])
        if model.conf_band_limited:
            dC = g.dealias(dC)
        U = State(U.v + dv, U.C + dC)
        if not model.conf_in_domain(U.C):
            raise ConfigError("initial.perturb leaves the SPD cone; reduce it")
    return U
