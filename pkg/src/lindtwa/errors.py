"""Exception types raised across the package."""


class TWAError(Exception):
    """Base class for package errors."""


class NonHermitianGamma(TWAError, ValueError):
    pass


class NegativeGammaEigenvalue(TWAError, ValueError):
    pass


class NonHermitianHamiltonian(TWAError, ValueError):
    pass


class UnknownVariable(TWAError, ValueError):
    pass


class ZeroDisplacement(TWAError, ValueError):
    pass


class AboveCritical(TWAError, ValueError):
    pass


class OrderingAmbiguity(TWAError, ValueError):
    pass


class HilbertSpaceTooLarge(TWAError, ValueError):
    pass


class ConfigError(TWAError, ValueError):
    """Invalid run configuration. ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class NonFiniteState(TWAError, RuntimeError):
    """A trajectory produced NaN/Inf (or a runaway spin component)."""

    def __init__(self, message: str, time: float | None = None, indices=None):
        super().__init__(message)
        self.time = time
        self.indices = indices


class EnsembleAborted(TWAError, RuntimeError):
    """Too many trajectories of an ensemble aborted."""


class TraceDrift(TWAError, RuntimeError):
    """The density-matrix trace drifted beyond tolerance."""


class CutoffTooSmall(UserWarning):
    """Initial boson weight near the truncation edge is not negligible."""
