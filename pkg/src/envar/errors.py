"""Exception hierarchy shared by all modules."""


class EnvarError(Exception):
    """Base class for every error raised by the package."""


class NotPositiveDefinite(EnvarError, ValueError):
    """A matrix (field) expected to be SPD has an eigenvalue at or below the floor."""


class DegenerateInvariants(EnvarError, ValueError):
    """The invariant combination in the angular-velocity formula is too small."""


class GridMismatch(EnvarError, ValueError):
    """Fields passed to a grid operation do not live on the same grid."""


class OutsideDomain(EnvarError, ValueError):
    """A state lies outside the effective domain of the energy or dissipation."""


class Misaligned(EnvarError, ValueError):
    """Requested times are not on the stored time grid of a trajectory."""


class NumericalFailure(EnvarError, RuntimeError):
    """Base class for failures of the time stepping machinery."""


class SaddleNotConverged(NumericalFailure):
    """The min-max step could not certify its saddle value within the budget."""


class SpdLost(NumericalFailure):
    """A conformation field lost positive definiteness during time stepping.

    Attributes
    ----------
    node : tuple or None
        Grid index of the offending node when known.
    step : int or None
        Time step index when known.
    """

    def __init__(self, message, node=None, step=None):
        super().__init__(message)
        self.node = node
        self.step = step


class ConfigError(EnvarError, ValueError):
    """Invalid run configuration (unknown key, out-of-range parameter, ...)."""
