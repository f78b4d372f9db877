import numpy as np
import pytest

from envar import tensor_core as tc
from envar.config import build_initial_state, build_model, load_config, parse_config
from envar.errors import ConfigError

BASE = {"grid": {"n": 16}, "scheme": {"tau": 0.01, "n_steps": 4},
        "model_q": {"mu": 1.0, "beta": 0.5, "delta": 0.5}}


def with_(**sections):
    d = {k: dict(v) for k, v in BASE.items()}
    for k, v in sections.items():
        if v is None:
            d.pop(k)
        else:
            d.setdefault(k, {}).update(v)
    return d


def test_defaults():
    cfg = parse_config(with_())
    assert cfg.model_name == "model_q"
    assert cfg.model["alpha"] == 1.0 and cfg.model["include_relaxation_weight"] is True
    assert cfg.scheme["mode"] == "minmax"
    assert cfg.diagnostics["energy_law"] and cfg.diagnostics["evi"]
    assert cfg.initial["kind"] == "random"


def test_baseline_mode_disables_energy_law():
    cfg = parse_config(with_(scheme={"mode": "baseline"}))
    assert not cfg.diagnostics["energy_law"] and not cfg.diagnostics["evi"]


@pytest.mark.parametrize("data,match", [
    (with_(model_q={"beta": 1.5}), r"model_q\.beta = 1\.5 is outside the valid range \(0, 1\)"),
    (with_(model_q={"delta": -1}), r"model_q\.delta"),
    (with_(model_q={"alpha": 0.0}), r"alpha must be nonzero"),
    (with_(grid={"n": 24}), r"power of two"),
    (with_(grid={"n": 4}), r"grid\.n"),
    (with_(grid={"size": 4}), r"unknown key grid\.size"),
    (with_(solver={"x": 1}), r"unknown section \[solver\]"),
    (with_(model_s={"mu": 1, "mu_p": 1}), r"exactly one"),
    (with_(model_q=None), r"exactly one"),
    (with_(scheme={"tau": "fast"}), r"scheme\.tau must be a number"),
    (with_(scheme={"n_steps": 2.5}), r"integer"),
    (with_(scheme={"mode": "explicit"}), r"scheme\.mode"),
    (with_(model_q={"include_relaxation_weight": 1}), r"true or false"),
    ({"grid": {"n": 16}, "model_llz": {"mu": 1}, "scheme": {"n_steps": 1}}, r"scheme\.tau is required"),
    (with_(forcing={"modes": [{"kx": 0, "ky": 0, "amp": 1}]}), r"\(0, 0\)"),
    (with_(forcing={"modes": [{"kx": 1, "amp": 1}]}), r"ky is required"),
    (with_(forcing={"modes": [{"kx": 1, "ky": 0, "amp": 1, "freq": 2}]}), r"unknown key"),
])
def test_rejections(data, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(data)


def test_load_config_file(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('[grid]\nn = 16\n[scheme]\ntau = 0.01\nn_steps = 2\n[model_llz]\nmu = 0.5\n')
    cfg = load_config(p)
    assert cfg.model == {"mu": 0.5}
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.toml")
    (tmp_path / "bad.toml").write_text("[grid\nn = ")
    with pytest.raises(ConfigError, match="malformed"):
        load_config(tmp_path / "bad.toml")


def test_output_dir_override(monkeypatch):
    cfg = parse_config(with_(output={"dir": "a"}))
    monkeypatch.delenv("OUTPUT_DIR", raising=False)
    assert cfg.output_dir == "a"
    monkeypatch.setenv("OUTPUT_DIR", "b")
    assert cfg.output_dir == "b"


def test_build_model_and_forcing_band():
    cfg = parse_config(with_(forcing={"modes": [{"kx": 1, "ky": 2, "amp": 0.5}]}))
    m = build_model(cfg)
    assert m.name == "model_q" and not m.forcing.is_zero
    cfg = parse_config(with_(forcing={"modes": [{"kx": 6, "ky": 0, "amp": 0.5}]}))
    with pytest.raises(ConfigError, match="band"):
        build_model(cfg)


@pytest.mark.parametrize("kind", ["equilibrium", "random", "taylor_green", "relaxation"])
def test_initial_states(kind):
    cfg = parse_config(with_(initial={"kind": kind}))
    m = build_model(cfg)
    U = build_initial_state(cfg, m)
    assert np.isfinite(m.energy(U))
    if kind == "equilibrium":
        assert m.energy(U) == 0.0


def test_initial_state_errors():
    cfg = parse_config(with_(initial={"k_max": 6}))
    with pytest.raises(ConfigError, match="k_max"):
        build_initial_state(cfg, build_model(cfg))
    cfg = parse_config(with_(initial={"kind": "relaxation", "c_amp": 0.95}))
    with pytest.raises(ConfigError, match="SPD"):
        build_initial_state(cfg, build_model(cfg))
    llz = {"grid": {"n": 16}, "scheme": {"tau": 0.01, "n_steps": 1}, "model_llz": {"mu": 1.0},
           "initial": {"kind": "relaxation"}}
    cfg = parse_config(llz)
    with pytest.raises(ConfigError, match="SPD model"):
        build_initial_state(cfg, build_model(cfg))


def test_perturbed_initial_state():
    cfg = parse_config(with_(initial={"kind": "equilibrium", "perturb": 0.1}))
    m = build_model(cfg)
    U = build_initial_state(cfg, m)
    assert m.energy(U) > 0
    assert np.all(tc.is_spd(U.C))
