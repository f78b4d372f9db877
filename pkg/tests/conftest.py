import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from envar import GridSpec, ModelLLZ, ModelQ, ModelS, ParamsLLZ, ParamsQ, ParamsS

settings.register_profile(
    "envar",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("envar")

MODEL_NAMES = ["model_q", "model_s", "model_llz"]


def make_model(name, n=16, forcing=None, **overrides):
    grid = GridSpec(n)
    if name == "model_q":
        p = dict(mu=1.0, alpha=1.0, beta=0.5, delta=0.5)
        p.update(overrides)
        return ModelQ(grid, ParamsQ(**p), forcing)
    if name == "model_s":
        p = dict(mu=1.0, alpha=1.0, mu_p=1.0)
        p.update(overrides)
        return ModelS(grid, ParamsS(**p), forcing)
    p = dict(mu=1.0)
    p.update(overrides)
    return ModelLLZ(grid, ParamsLLZ(**p), forcing)


@pytest.fixture(params=MODEL_NAMES)
def model(request):
    return make_model(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
