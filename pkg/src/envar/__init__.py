"""Energy-variational solutions for viscoelastic fluid models.

A min-max time-incremental solver for three viscoelastic models on a
periodic spectral grid, together with checkers that certify the defining
inequalities on the computed trajectories.
"""

from .errors import (
    ConfigError,
    EnvarError,
    GridMismatch,
    NotPositiveDefinite,
    NumericalFailure,
    SaddleNotConverged,
    SpdLost,
)
from .grid import GridSpec, TestFunction, random_smooth_field
from .model_api import DualState, ForceMode, ModeForcing, Model, State
from .model_llz import ModelLLZ, ParamsLLZ
from .model_q import ModelQ, ParamsQ
from .model_s import ModelS, ParamsS
from .scheme import AugmentedTrajectory, SchemeConfig, run

__version__ = "0.1.0"

__all__ = [
    "AugmentedTrajectory",
    "ConfigError",
    "DualState",
    "EnvarError",
    "ForceMode",
    "GridMismatch",
    "GridSpec",
    "ModeForcing",
    "Model",
    "ModelLLZ",
    "ModelQ",
    "ModelS",
    "NotPositiveDefinite",
    "NumericalFailure",
    "ParamsLLZ",
    "ParamsQ",
    "ParamsS",
    "SaddleNotConverged",
    "SchemeConfig",
    "SpdLost",
    "State",
    "TestFunction",
    "random_smooth_field",
    "run",
]
