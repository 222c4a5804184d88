"""Exception types raised across the package."""


class DDError(Exception):
    """Base class for all package errors."""


class InvalidSplit(DDError, ValueError):
    pass


class DegenerateMesh(DDError, ValueError):
    pass


class ShapeMismatch(DDError, ValueError):
    pass


class InvalidGamma(DDError, ValueError):
    pass


class NearResonance(DDError, ArithmeticError):
    """k^2 sits (numerically) on a Dirichlet or Neumann eigenvalue."""

    def __init__(self, message, eigenvalue=None, distance=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue
        self.distance = distance


class SingularSystem(DDError, ArithmeticError):
    pass


class ConvergenceFailure(DDError, ArithmeticError):
    pass


class ClusterAmbiguity(DDError, ValueError):
    pass


class TooCloseToSpectrum(DDError, ValueError):
    pass


class ThetaConditionViolated(DDError, ValueError):
    pass


class MaxItersExceeded(DDError, RuntimeError):
    """Iteration budget exhausted; the partial result is attached."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ConfigError(DDError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
