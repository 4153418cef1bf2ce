"""Exception hierarchy shared across the package."""


class PolymerLabError(Exception):
    """Base class for all package-specific failures."""


class DimensionMismatchError(PolymerLabError):
    """A point or point set does not match the kernel's spatial dimension."""


class UnsupportedFamilyError(PolymerLabError):
    """The requested operation is not available for this kernel family."""


class CholeskyError(PolymerLabError):
    """Covariance factorization failed even after the jitter ladder."""


class QuadratureError(PolymerLabError):
    """Adaptive quadrature did not converge within its iteration cap."""


class GridMismatchError(PolymerLabError):
    """Path ensemble and environment disagree on the time grid."""


class WeightDegeneracyError(PolymerLabError):
    """All Gibbs weight mass collapsed onto a single replica."""


class ModeError(PolymerLabError):
    """Operation called on an environment in the wrong sampling mode."""


class ConfigError(PolymerLabError):
    """Invalid configuration text; carries a line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
