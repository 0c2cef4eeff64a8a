"""Exception hierarchy shared by all modules.

Configuration problems derive from ``ConfigError`` (CLI exit code 2) and
numerical failures from ``NumericalError`` (CLI exit code 3).
"""


class ConfigError(ValueError):
    """Invalid model, parameter or request."""


class DomainError(ConfigError):
    """Quantity requested outside the region where it is defined."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed to deliver a trustworthy value."""


class OverflowNumericalError(NumericalError):
    """A weight or matrix entry is not representable as a finite float.

    ``log_value`` carries the offending logarithm when it is known, so callers
    can still use it as a lower bound.
    """

    def __init__(self, message, log_value=float("nan")):
        super().__init__(message)
        self.log_value = log_value


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class TruncationError(NumericalError):
    """Truncation refinement did not converge.

    ``solution`` is the last (largest-N) spectral solution, whose eigenvalue
    is a lower bound for the untruncated one.  Root finders that give up set
    ``bracket`` to an interval still certified to contain the root.
    """

    def __init__(self, message, solution=None, bracket=None):
        super().__init__(message)
        self.solution = solution
        self.bracket = bracket


class BracketError(NumericalError):
    pass


class DomainTooSmallError(NumericalError):
    """Eigenfunction mass reaches the artificial right boundary."""
