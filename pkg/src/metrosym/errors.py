"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical failures (degeneracies, underflow) with 3, I/O errors with 4.
"""


class MetrosymError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MetrosymError):
    """Invalid or inconsistent experiment configuration."""


class NumericalError(MetrosymError):
    """A numerical contract was violated (degeneracy, underflow, ...)."""


class DimensionMismatchError(MetrosymError):
    """Operator or state dimensions are inconsistent."""


class HermiticityError(MetrosymError):
    """A matrix violates Hermiticity beyond the repairable tolerance."""


class DegenerateGroundStateError(NumericalError):
    """Ground state is not unique within the requested gap tolerance."""


class EigenConvergenceError(NumericalError):
    """The dense Hermitian eigensolver failed to converge."""


class PosteriorUnderflowError(NumericalError):
    """Every grid cell underflowed during a posterior update."""


class SingularMatrixError(NumericalError):
    """A matrix that must be invertible is singular or ill-conditioned."""


class IncompatibleObservableError(ConfigError):
    """Observable not defined for the requested model."""
