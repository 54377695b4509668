"""Exception hierarchy shared by the library and the CLI.

The CLI maps each family to a distinct exit code (see ``occucast.cli``).
"""


class OccucastError(Exception):
    """Base class for all library errors."""


class InputError(OccucastError, ValueError):
    """Invalid user data: out-of-range coordinates, negative counts, bad files."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class EmptyInputError(InputError):
    """No usable records were supplied."""


class ConfigError(OccucastError, ValueError):
    """Invalid or inconsistent configuration."""


class NumericalError(OccucastError, ArithmeticError):
    """A numerical routine failed or produced an invalid state."""


class SolverError(NumericalError):
    """Root finding did not converge; ``last_iterate`` holds the final guess."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DegeneratePriorError(NumericalError):
    """Predictor prior variance is non-positive or too small to match."""


class NumericalStateError(NumericalError):
    """State covariance is not positive semi-definite beyond tolerance."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue
